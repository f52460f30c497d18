//! Steady state of the blockade mean-field model.
//!
//! Zeroing the time derivatives of the cavity field `a`, the collective
//! intermediate coherence `b` and the collective Rydberg coherence `c`
//! leaves a single real unknown, the Rydberg intensity `x = |c|²`:
//!
//! ```text
//! D̃_r(x) = D_r + κ x
//! E(x)   = D_e − Ω² / (4 D̃_r(x))
//! a      = α / (D_c − g²N / E(x))
//! b      = g√N a / E(x)
//! c      = (Ω/2) b / D̃_r(x)
//! ```
//!
//! and the self-consistency `F(x) = |c(x)|² = x`. The interaction enters
//! with the sign that makes the blockade an added dephasing of the Rydberg
//! coherence (`Im κ ≥ 0` on resonance, so `Im D̃_r ≥ γ_r`), which is what
//! produces the drop of transparency with probe power.
//!
//! `F` is continuous and `F(0)` is the non-interacting intensity, so the
//! root is bracketed on `[0, 10 F(0)]` by a sign scan and polished with
//! Brent's method. When several sign changes appear (bistability) the root
//! closest to the seed is returned and the multiplicity is reported.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interaction;
use crate::linear::{
    cavity_response, dressed_detuning, transmission_from_effective, transmission_linear,
};
use crate::params::{PhysicalParams, ScanSpec, ScanVariable};

const SCAN_POINTS: usize = 256;
const X_MAX_FACTOR: f64 = 10.0;
const RESIDUAL_TOL: f64 = 1e-10;

/// Steady-state equations for one parameter point, with κ already evaluated.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldModel {
    pub de: Complex64,
    pub dr: Complex64,
    pub dc: Complex64,
    pub omega_cf: f64,
    /// `g√N`, MHz.
    pub coupling: f64,
    pub alpha: f64,
    pub gamma_c: f64,
    pub kappa: Complex64,
    /// `|V_b| / V`, for the blockaded-fraction diagnostic.
    pub volume_ratio: f64,
}

/// Mean-field amplitudes at one trial intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fields {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    /// Effective atomic detuning `E(x)`.
    pub effective: Complex64,
}

impl MeanFieldModel {
    pub fn from_params(params: &PhysicalParams) -> Result<Self> {
        let d = params.detunings();
        let omega = params.drive.omega_cf;
        let v_b = interaction::blockade_volume(d.e, d.r, omega, params.c6())?;
        let kappa = interaction::kappa(d.e, d.r, omega, v_b, params.ensemble.cloud_volume)?;
        Ok(MeanFieldModel {
            de: d.e.value(),
            dr: d.r.value(),
            dc: d.c.value(),
            omega_cf: omega,
            coupling: params.collective_coupling(),
            alpha: params.drive.alpha,
            gamma_c: params.cavity.gamma_c,
            kappa,
            volume_ratio: v_b.norm() / params.ensemble.cloud_volume,
        })
    }

    /// Same model with the interaction constant replaced.
    pub fn with_kappa(mut self, kappa: Complex64) -> Self {
        self.kappa = kappa;
        self
    }

    /// `D_r + κ x`.
    pub fn rydberg_detuning(&self, x: f64) -> Complex64 {
        self.dr + self.kappa * x
    }

    pub fn fields(&self, x: f64) -> Result<Fields> {
        let dr = self.rydberg_detuning(x);
        let effective = dressed_detuning(self.de, dr, self.omega_cf)?;
        let a = self.alpha * cavity_response(effective, self.dc, self.coupling * self.coupling)?;
        if self.alpha == 0.0 {
            let zero = Complex64::new(0.0, 0.0);
            return Ok(Fields {
                a: zero,
                b: zero,
                c: zero,
                effective,
            });
        }
        let b = self.coupling * a / effective;
        let c = if self.omega_cf == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            0.5 * self.omega_cf * b / dr
        };
        Ok(Fields { a, b, c, effective })
    }

    /// `F(x) = |c(x)|²`.
    pub fn map(&self, x: f64) -> Result<f64> {
        Ok(self.fields(x)?.c.norm_sqr())
    }

    /// `F(x) − x`.
    pub fn residual(&self, x: f64) -> Result<f64> {
        Ok(self.map(x)? - x)
    }

    pub fn transmission_at(&self, x: f64) -> Result<f64> {
        let effective = dressed_detuning(self.de, self.rydberg_detuning(x), self.omega_cf)?;
        transmission_from_effective(
            effective,
            self.dc,
            self.coupling * self.coupling,
            self.gamma_c,
        )
    }

    /// Right-hand sides of the three dynamical equations at the given
    /// amplitudes; all vanish at a steady state.
    pub fn dynamical_residuals(&self, a: Complex64, b: Complex64, c: Complex64) -> [Complex64; 3] {
        let i = Complex64::i();
        let g = self.coupling;
        let half_omega = 0.5 * self.omega_cf;
        let dr = self.dr + self.kappa * c.norm_sqr();
        [
            i * self.dc * a - i * g * b - i * self.alpha,
            i * self.de * b - i * g * a - i * half_omega * c,
            i * dr * c - i * half_omega * b,
        ]
    }
}

/// `F(x) − x` for the configured parameters.
pub fn steady_residual(params: &PhysicalParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Solver(format!(
            "trial intensity must be >= 0, got {x}"
        )));
    }
    MeanFieldModel::from_params(params)?.residual(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldSolution {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    /// `|c|²`
    pub x: f64,
    pub residual: f64,
    /// Index of the selected root among all sign changes, ascending in x.
    pub branch_id: usize,
    /// Number of sign changes found by the bracketing scan.
    pub root_count: usize,
    pub transmission: f64,
    /// `x |V_b| / V`, the mean number of blockade volumes per cloud volume
    /// occupied by Rydberg excitations.
    pub blockaded_fraction: f64,
}

impl MeanFieldSolution {
    pub fn is_multistable(&self) -> bool {
        self.root_count > 1
    }
}

fn bracket_grid(x_max: f64) -> Vec<f64> {
    let half = SCAN_POINTS / 2;
    let mut grid: Vec<f64> = (0..half)
        .map(|k| x_max * k as f64 / (half - 1) as f64)
        .chain((0..half).map(|k| x_max * 10f64.powf(-8.0 + 8.0 * k as f64 / (half - 1) as f64)))
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Brent's method on a sign-changing bracket.
fn brent<F>(f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..200 {
        let tol = 4.0 * f64::EPSILON * b.abs().max(1e-300);
        if fb == 0.0 || (b - a).abs() <= tol {
            return Ok(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let outside = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < tol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < tol
        };
        bisected = outside || slow;
        if bisected {
            s = 0.5 * (a + b);
        }
        let fs = f(s)?;
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Ok(b)
}

/// Finds the self-consistent intensity closest to `x_seed`.
pub fn solve_model(model: &MeanFieldModel, x_seed: f64) -> Result<MeanFieldSolution> {
    let x_lin = model.map(0.0)?;
    let (x, root_count, branch_id) = if x_lin == 0.0 {
        (0.0, 1, 0)
    } else {
        let x_max = X_MAX_FACTOR * x_lin;
        let grid = bracket_grid(x_max);
        let values = grid
            .iter()
            .map(|&x| model.residual(x))
            .collect::<Result<Vec<_>>>()?;
        let brackets: Vec<usize> = (0..grid.len() - 1)
            .filter(|&k| values[k] == 0.0 || values[k] * values[k + 1] < 0.0)
            .collect();
        if brackets.is_empty() {
            return Err(Error::Solver(format!(
                "no sign change of F(x) - x on [0, {x_max:.6e}]; F(0) - 0 = {:.6e}, F(x_max) - x_max = {:.6e}",
                values[0],
                values[values.len() - 1]
            )));
        }
        let distance = |k: usize| {
            if x_seed < grid[k] {
                grid[k] - x_seed
            } else if x_seed > grid[k + 1] {
                x_seed - grid[k + 1]
            } else {
                0.0
            }
        };
        let branch_id = (0..brackets.len())
            .min_by(|&i, &j| distance(brackets[i]).total_cmp(&distance(brackets[j])))
            .expect("at least one bracket");
        let k = brackets[branch_id];
        let x = brent(
            |x| model.residual(x),
            grid[k],
            grid[k + 1],
            values[k],
            values[k + 1],
        )?;
        (x, brackets.len(), branch_id)
    };

    let fields = model.fields(x)?;
    let residual = (fields.c.norm_sqr() - x).abs();
    if residual > RESIDUAL_TOL * x.max(1.0) {
        return Err(Error::Solver(format!(
            "root polishing stalled at x = {x:.12e} with |F(x) - x| = {residual:.3e}"
        )));
    }
    Ok(MeanFieldSolution {
        a: fields.a,
        b: fields.b,
        c: fields.c,
        x,
        residual,
        branch_id,
        root_count,
        transmission: model.transmission_at(x)?,
        blockaded_fraction: x * model.volume_ratio,
    })
}

pub fn solve_self_consistent(params: &PhysicalParams, x_seed: f64) -> Result<MeanFieldSolution> {
    solve_model(&MeanFieldModel::from_params(params)?, x_seed.max(0.0))
}

/// Nonlinear steady-state transmission; the linear value at zero drive.
pub fn transmission_meanfield(params: &PhysicalParams) -> Result<f64> {
    if params.drive.alpha == 0.0 {
        return transmission_linear(params, params.drive.delta_p);
    }
    Ok(solve_self_consistent(params, 0.0)?.transmission)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonlinearPoint {
    /// Probe detuning in MHz or photon rate in photons/μs.
    pub axis: f64,
    /// NaN where the solver failed.
    pub transmission: f64,
    pub x: f64,
    pub root_count: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearSpectrum {
    pub variable: ScanVariable,
    pub points: Vec<NonlinearPoint>,
    pub params: PhysicalParams,
}

impl NonlinearSpectrum {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| !p.converged).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let axis = match self.variable {
            ScanVariable::DeltaP => "delta_p_mhz",
            ScanVariable::PhotonRate => "photon_rate_per_us",
        };
        writeln!(out, "{axis},transmission,x,root_count")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.axis, p.transmission, p.x, p.root_count
            )?;
        }
        Ok(())
    }
}

fn point_params(params: &PhysicalParams, variable: ScanVariable, value: f64) -> PhysicalParams {
    match variable {
        ScanVariable::DeltaP => params.at_detuning(value),
        ScanVariable::PhotonRate => params.at_photon_rate(value),
    }
}

/// Sequential sweep over an arbitrary grid, each point seeded with the
/// previous point's intensity.
pub fn scan_meanfield_grid(
    params: &PhysicalParams,
    variable: ScanVariable,
    grid: &[f64],
) -> NonlinearSpectrum {
    let mut seed = 0.0;
    let points = grid
        .iter()
        .map(|&value| {
            let p = point_params(params, variable, value);
            let solved = if p.drive.alpha == 0.0 {
                transmission_linear(&p, p.drive.delta_p).map(|t| (t, 0.0, 1))
            } else {
                solve_self_consistent(&p, seed).map(|s| (s.transmission, s.x, s.root_count))
            };
            match solved {
                Ok((transmission, x, root_count)) => {
                    seed = x;
                    NonlinearPoint {
                        axis: value,
                        transmission,
                        x,
                        root_count,
                        converged: true,
                    }
                }
                Err(_) => NonlinearPoint {
                    axis: value,
                    transmission: f64::NAN,
                    x: f64::NAN,
                    root_count: 0,
                    converged: false,
                },
            }
        })
        .collect();
    NonlinearSpectrum {
        variable,
        points,
        params: params.clone(),
    }
}

pub fn scan_meanfield(params: &PhysicalParams, scan: &ScanSpec) -> Result<NonlinearSpectrum> {
    scan.validate()?;
    Ok(scan_meanfield_grid(params, scan.variable, &scan.grid()))
}
