use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use super::integrator::{Dopri5, IntegrationStats};
use super::model::BubbleModel;
use crate::error::{Error, Result};
use crate::params::PhysicalParams;

type C = Complex64;

/// Trace drift beyond which an evolution is aborted.
pub const TRACE_ABORT: f64 = 1e-6;

/// Density matrix of one bubble plus the classical cavity amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleState {
    pub rho: DMatrix<C>,
    pub a: C,
    /// μs
    pub t: f64,
}

impl BubbleState {
    /// All atoms in the ground state, cavity empty.
    pub fn ground(dim: usize) -> Self {
        let mut rho = DMatrix::zeros(dim, dim);
        rho[(0, 0)] = C::new(1.0, 0.0);
        BubbleState {
            rho,
            a: C::new(0.0, 0.0),
            t: 0.0,
        }
    }

    pub fn trace_error(&self) -> f64 {
        (self.rho.trace() - C::new(1.0, 0.0)).norm()
    }

    /// Largest element of `ρ − ρ†`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.rho)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let hermitian = (&self.rho + self.rho.adjoint()) * C::new(0.5, 0.0);
        SymmetricEigen::new(hermitian).eigenvalues.min()
    }
}

fn hermiticity_error(rho: &DMatrix<C>) -> f64 {
    let n = rho.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    /// μs
    pub t: f64,
    pub transmission: f64,
    pub pop_r: f64,
    pub pop_s: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    /// Only filled when positivity checks are requested.
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeSeries {
    pub samples: Vec<Sample>,
    /// Largest Hermiticity defect removed by the per-step projection.
    pub max_hermitization: f64,
    #[serde(skip)]
    pub stats: IntegrationStats,
}

impl TimeSeries {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn transmissions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.transmission).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t_us,transmission,pop_R,pop_S,trace_error")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.t, s.transmission, s.pop_r, s.pop_s, s.trace_error
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvolveOptions {
    /// Starting state; the ground state with an empty cavity when absent.
    pub initial: Option<BubbleState>,
    /// Diagonalize ρ at every sample to record its smallest eigenvalue.
    pub check_positivity: bool,
}

/// Integrates the model through the given sample times (μs, ascending).
/// Returns the sampled series and the final state.
pub fn evolve_model(
    model: &BubbleModel,
    rtol: f64,
    atol: f64,
    times: &[f64],
    options: &EvolveOptions,
) -> Result<(TimeSeries, BubbleState)> {
    if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(Error::Integrator {
            t: w[0],
            reason: "sample times must be strictly increasing".into(),
        });
    }
    let dim = model.dim();
    let start = options
        .initial
        .clone()
        .unwrap_or_else(|| BubbleState::ground(dim));
    if start.rho.nrows() != dim {
        return Err(Error::Integrator {
            t: start.t,
            reason: format!(
                "initial state has dimension {}, model needs {dim}",
                start.rho.nrows()
            ),
        });
    }
    if times.first().is_some_and(|&t0| t0 < start.t) {
        return Err(Error::Integrator {
            t: start.t,
            reason: "sample times precede the initial state".into(),
        });
    }
    let mut y = model.flatten(&start.rho, start.a);
    let size = dim * dim;
    let mut samples = Vec::with_capacity(times.len());
    let mut max_hermitization: f64 = 0.0;

    let stats = Dopri5::new(rtol, atol).integrate(
        |_, y, dy| model.derivative(y, dy),
        start.t,
        &mut y,
        times,
        |t, y| {
            let mut worst: f64 = 0.0;
            for i in 0..dim {
                for j in i..dim {
                    let (u, l) = (y[i * dim + j], y[j * dim + i]);
                    worst = worst.max((u - l.conj()).norm());
                    let avg = 0.5 * (u + l.conj());
                    y[i * dim + j] = avg;
                    y[j * dim + i] = avg.conj();
                }
            }
            max_hermitization = max_hermitization.max(worst);
            let trace: C = (0..dim).map(|i| y[i * dim + i]).sum();
            let drift = (trace - C::new(1.0, 0.0)).norm();
            if drift > TRACE_ABORT {
                return Err(Error::Integrator {
                    t,
                    reason: format!("trace drifted by {drift:.3e}"),
                });
            }
            Ok(())
        },
        |t, y| {
            let trace: C = (0..dim).map(|i| y[i * dim + i]).sum();
            let (hermiticity_error, min_eigenvalue) = if options.check_positivity {
                let (rho, _) = model.unflatten(y);
                let state = BubbleState { rho, a: y[size], t };
                (state.hermiticity_error(), Some(state.min_eigenvalue()))
            } else {
                let (rho, _) = model.unflatten(y);
                (hermiticity_error(&rho), None)
            };
            samples.push(Sample {
                t,
                transmission: model.transmission(y[size]),
                pop_r: model.population_r(y),
                pop_s: model.population_s(y),
                trace_error: (trace - C::new(1.0, 0.0)).norm(),
                hermiticity_error,
                min_eigenvalue,
            });
            Ok(())
        },
    )?;

    let (rho, a) = model.unflatten(&y);
    let end = BubbleState {
        rho,
        a,
        t: times.last().copied().unwrap_or(start.t),
    };
    Ok((
        TimeSeries {
            samples,
            max_hermitization,
            stats,
        },
        end,
    ))
}

/// Uniform sample grid `0, dt, 2dt, …` ending exactly at `t_end`.
pub fn sample_times(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || !(dt > 0.0) {
        return Err(Error::Validation(vec![crate::error::FieldError::new(
            "evolve",
            "t_end and dt must be > 0",
        )]));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    times.push(t_end);
    Ok(times)
}

/// Evolution from the ground state with the probe switched on at `t = 0`.
pub fn evolve(params: &PhysicalParams, t_end: f64, dt: f64) -> Result<TimeSeries> {
    evolve_at(params, &sample_times(t_end, dt)?, &EvolveOptions::default())
}

pub fn evolve_at(
    params: &PhysicalParams,
    times: &[f64],
    options: &EvolveOptions,
) -> Result<TimeSeries> {
    let model = BubbleModel::from_params(params)?;
    let (series, _) = evolve_model(
        &model,
        params.bubble.rtol,
        params.bubble.atol,
        times,
        options,
    )?;
    Ok(series)
}

/// Width of the convergence window, μs.
pub const STEADY_WINDOW: f64 = 5.0;
/// Longest evolution attempted when looking for a plateau, μs.
pub const STEADY_T_MAX: f64 = 500.0;
const STEADY_SAMPLE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteadyBubble {
    pub transmission: f64,
    /// Time at which the plateau criterion was met (or `t_max`), μs.
    pub t: f64,
    pub converged: bool,
    /// Criterion met at the first opportunity, one window after switch-on.
    pub early: bool,
}

/// Evolves until `|T(t) − T(t − W)| / T(t) < threshold`.
pub fn steady_transmission_bubble(params: &PhysicalParams, threshold: f64) -> Result<SteadyBubble> {
    if !(threshold > 0.0) {
        return Err(Error::Validation(vec![crate::error::FieldError::new(
            "threshold",
            "convergence threshold must be > 0",
        )]));
    }
    let model = BubbleModel::from_params(params)?;
    let lag = (STEADY_WINDOW / STEADY_SAMPLE).round() as usize;
    let chunk = 20.0;
    let mut history: Vec<f64> = vec![];
    let mut state = BubbleState::ground(model.dim());
    let mut first = true;
    while state.t < STEADY_T_MAX {
        let t0 = state.t;
        let t1 = (t0 + chunk).min(STEADY_T_MAX);
        let n = ((t1 - t0) / STEADY_SAMPLE).round() as usize;
        let times: Vec<f64> = (usize::from(!first)..=n)
            .map(|k| {
                if k == n {
                    t1
                } else {
                    t0 + k as f64 * STEADY_SAMPLE
                }
            })
            .collect();
        first = false;
        let options = EvolveOptions {
            initial: Some(state),
            check_positivity: false,
        };
        let (series, end) = evolve_model(
            &model,
            params.bubble.rtol,
            params.bubble.atol,
            &times,
            &options,
        )?;
        for s in &series.samples {
            history.push(s.transmission);
            let k = history.len() - 1;
            if k >= lag {
                let now = history[k];
                let rel = (now - history[k - lag]).abs() / now.max(1e-12);
                if rel < threshold {
                    return Ok(SteadyBubble {
                        transmission: now,
                        t: s.t,
                        converged: true,
                        early: k == lag,
                    });
                }
            }
        }
        state = end;
    }
    Ok(SteadyBubble {
        transmission: *history.last().unwrap_or(&0.0),
        t: STEADY_T_MAX,
        converged: false,
        early: false,
    })
}

/// Largest relative change of `T(t)` when the boson cutoff is raised by `extra`.
pub fn cutoff_deviation(params: &PhysicalParams, times: &[f64], extra: usize) -> Result<f64> {
    let base = evolve_at(params, times, &EvolveOptions::default())?;
    let mut raised = params.clone();
    raised.bubble.n_max += extra;
    let fine = evolve_at(&raised, times, &EvolveOptions::default())?;
    Ok(base
        .samples
        .iter()
        .zip(&fine.samples)
        .map(|(a, b)| (a.transmission - b.transmission).abs() / a.transmission.abs().max(1e-12))
        .fold(0.0, f64::max))
}
