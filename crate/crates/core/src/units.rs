//! Unit conventions.
//!
//! Every user-facing frequency or rate is an ordinary frequency in MHz, the
//! way cavity and atomic linewidths are usually quoted (`γ/2π = 10 MHz` is
//! stored as `10.0`). Time integration works in rad/μs and μs, so rates are
//! passed through [`to_angular`] on the way into an ODE right-hand side.

use std::f64::consts::TAU;

use crate::error::{Error, FieldError, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Converts an ordinary frequency in MHz to an angular frequency in rad/μs.
#[inline]
pub fn to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

/// Full width at half maximum of a Fabry-Perot resonance, in MHz.
///
/// The free spectral range `c / 2L` divided by the finesse.
pub fn linewidth_from_geometry(length_m: f64, finesse: f64) -> Result<f64> {
    let mut errors = Vec::new();
    if !(length_m > 0.0) {
        errors.push(FieldError::new("length", "length must be > 0"));
    }
    if !(finesse > 0.0) {
        errors.push(FieldError::new("finesse", "finesse must be > 0"));
    }
    if !errors.is_empty() {
        return Err(Error::Validation(errors));
    }
    let fsr_hz = SPEED_OF_LIGHT / (2.0 * length_m);
    Ok(fsr_hz / finesse * 1e-6)
}
