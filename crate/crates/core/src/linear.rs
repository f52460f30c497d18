//! Linear (non-interacting) intracavity EIT.
//!
//! Eliminating the atomic coherences in steady state leaves the cavity
//! field dressed by the effective atomic detuning
//! `E = D_e − Ω²/(4 D_r)`, and the normalized transmission
//!
//! ```text
//! T = | γ_c E / (E D_c − 2 γ_e γ_c C) |²
//! ```
//!
//! which is 1 for an empty cavity on resonance.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{PhysicalParams, ScanSpec};

const SINGULAR: f64 = 1e-300;

/// Effective atomic detuning `D_e − Ω²/(4 D_r)`; the control term is exactly
/// zero when `Ω = 0`.
pub fn dressed_detuning(de: Complex64, dr: Complex64, omega_cf: f64) -> Result<Complex64> {
    if omega_cf == 0.0 {
        return Ok(de);
    }
    if dr.norm() < SINGULAR {
        return Err(Error::Singular(
            "Rydberg detuning D_r vanishes with the control field on".into(),
        ));
    }
    Ok(de - omega_cf * omega_cf / (4.0 * dr))
}

/// Cavity response `a/α = E / (E D_c − g²N)` for a given effective detuning.
pub fn cavity_response(effective: Complex64, dc: Complex64, coupling_sq: f64) -> Result<Complex64> {
    let denom = effective * dc - coupling_sq;
    if denom.norm() < SINGULAR {
        return Err(Error::Singular(
            "transmission denominator vanishes (undamped resonance)".into(),
        ));
    }
    Ok(effective / denom)
}

/// `γ_c² |a/α|²` for a given effective atomic detuning.
pub fn transmission_from_effective(
    effective: Complex64,
    dc: Complex64,
    coupling_sq: f64,
    gamma_c: f64,
) -> Result<f64> {
    let r = cavity_response(effective, dc, coupling_sq)?;
    Ok(gamma_c * gamma_c * r.norm_sqr())
}

/// Steady-state transmission at probe detuning `delta_p` (MHz).
pub fn transmission_linear(params: &PhysicalParams, delta_p: f64) -> Result<f64> {
    let p = params.at_detuning(delta_p);
    let d = p.detunings();
    let effective = dressed_detuning(d.e.value(), d.r.value(), p.drive.omega_cf)?;
    let g2 = p.collective_coupling().powi(2);
    transmission_from_effective(effective, d.c.value(), g2, p.cavity.gamma_c)
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    /// (probe detuning in MHz, transmission)
    pub points: Vec<(f64, f64)>,
    pub params: PhysicalParams,
}

impl Spectrum {
    pub fn detunings(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn transmissions(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "delta_p_mhz,transmission")?;
        for (x, t) in &self.points {
            writeln!(out, "{x},{t}")?;
        }
        Ok(())
    }
}

/// Transmission over a probe-detuning grid.
pub fn scan_linear(params: &PhysicalParams, scan: &ScanSpec) -> Result<Spectrum> {
    scan.validate()?;
    let points = scan
        .grid()
        .into_par_iter()
        .map(|x| transmission_linear(params, x).map(|t| (x, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        points,
        params: params.clone(),
    })
}
