//! Van der Waals coefficients and the blockade quantities built on them.
//!
//! C6 is quoted in GHz·μm⁶ while detunings are in MHz, so every formula that
//! divides C6 by a detuning first converts it to MHz·μm⁶.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{ComplexDetuning, PhysicalParams};

const GHZ_TO_MHZ: f64 = 1e3;
const SINGULAR_DETUNING: f64 = 1e-12;
const SINGULAR_VOLUME: f64 = 1e-12;

/// Isotropic C6 of the nS₁/₂ series of ⁸⁷Rb, GHz·μm⁶.
///
/// Negative over the whole range of interest (−140 at n = 60).
pub fn c6_s(n: u32) -> f64 {
    let r = f64::from(n) / 60.0;
    (63.0 - 267.0 * r + 64.0 * r * r) * r.powi(11)
}

/// Angle-averaged C6 of the nD₅/₂ series, GHz·μm⁶.
pub fn c6_d(n: u32) -> f64 {
    45.0 * (f64::from(n) / 56.0).powi(11)
}

fn nonzero(z: Complex64, what: &str) -> Result<Complex64> {
    if z.norm() > SINGULAR_DETUNING {
        Ok(z)
    } else {
        Err(Error::Singular(format!(
            "{what} vanishes (|{what}| = {:.3e})",
            z.norm()
        )))
    }
}

/// `Ω²/(4 D)`, exactly zero for a switched-off control field.
fn light_shift(omega: f64, d: Complex64, what: &str) -> Result<Complex64> {
    if omega == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(omega * omega / (4.0 * nonzero(d, what)?))
}

/// Doubly dressed two-photon detuning `D_e + D_r − Ω²/(4 D_e)`.
fn pair_detuning(de: Complex64, dr: Complex64, omega: f64) -> Result<Complex64> {
    Ok(de + dr - light_shift(omega, de, "D_e")?)
}

/// Complex blockade volume, μm³, on the principal branch of the square root.
pub fn blockade_volume(
    de: ComplexDetuning,
    dr: ComplexDetuning,
    omega_cf: f64,
    c6_ghz: f64,
) -> Result<Complex64> {
    let (de, dr) = (de.value(), dr.value());
    if c6_ghz == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let pair = pair_detuning(de, dr, omega_cf)?;
    let dressed = nonzero(
        de - light_shift(omega_cf, pair, "D_e + D_r - Ω²/4D_e")?,
        "D_eff",
    )?;
    let ratio = Complex64::new(c6_ghz * GHZ_TO_MHZ, 0.0) / dressed;
    Ok(SQRT_2 * PI * PI / 3.0 * ratio.sqrt())
}

/// Interaction factor `−2 (Ω²/(4 D_er) − D_r)` shared by both volume forms.
fn kappa_factor(de: Complex64, dr: Complex64, omega_cf: f64) -> Result<Complex64> {
    let pair = pair_detuning(de, dr, omega_cf)?;
    Ok(-2.0 * (light_shift(omega_cf, pair, "D_e + D_r - Ω²/4D_e")? - dr))
}

/// Mean-field interaction constant κ, MHz, with the finite-volume ratio
/// `V_b / (V − V_b)`.
pub fn kappa(
    de: ComplexDetuning,
    dr: ComplexDetuning,
    omega_cf: f64,
    v_b: Complex64,
    volume: f64,
) -> Result<Complex64> {
    let gap = Complex64::new(volume, 0.0) - v_b;
    if gap.norm() <= SINGULAR_VOLUME {
        return Err(Error::Singular(
            "cloud volume equals the blockade volume".into(),
        ));
    }
    Ok(v_b / gap * kappa_factor(de.value(), dr.value(), omega_cf)?)
}

/// κ in the large-volume limit, `V_b / (V − V_b) → V_b / V`.
pub fn kappa_large_volume(
    de: ComplexDetuning,
    dr: ComplexDetuning,
    omega_cf: f64,
    v_b: Complex64,
    volume: f64,
) -> Result<Complex64> {
    if !(volume > 0.0) {
        return Err(Error::Singular("cloud volume must be positive".into()));
    }
    Ok(v_b / volume * kappa_factor(de.value(), dr.value(), omega_cf)?)
}

/// Atoms sharing one Rydberg excitation, `N |V_b| / V`, clamped to `[1, N]`.
pub fn atoms_per_bubble(atom_number: u64, v_b: Complex64, volume: f64) -> f64 {
    let n = atom_number as f64;
    (n * v_b.norm() / volume).clamp(1.0, n.max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InteractionSummary {
    /// GHz·μm⁶
    pub c6: f64,
    /// μm³
    pub v_b: Complex64,
    /// MHz
    pub kappa: Complex64,
    pub n_b: f64,
    pub bubble_count: f64,
}

impl InteractionSummary {
    pub fn from_params(params: &PhysicalParams) -> Result<Self> {
        let d = params.detunings();
        let omega = params.drive.omega_cf;
        let c6 = params.c6();
        let v_b = blockade_volume(d.e, d.r, omega, c6)?;
        let kappa = kappa(d.e, d.r, omega, v_b, params.ensemble.cloud_volume)?;
        let n_b = params.bubble.n_b_override.unwrap_or_else(|| {
            atoms_per_bubble(
                params.ensemble.atom_number,
                v_b,
                params.ensemble.cloud_volume,
            )
        });
        Ok(InteractionSummary {
            c6,
            v_b,
            kappa,
            n_b,
            bubble_count: params.ensemble.atom_number as f64 / n_b,
        })
    }
}
