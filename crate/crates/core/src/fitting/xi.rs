use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::lm::{least_squares, Bounded, LmOptions};
use super::problem::{DataPoint, FitModel, FitParam, FitProblem};
use crate::bubble::TimeSeries;
use crate::error::{Error, Result};
use crate::params::PhysicalParams;

const XI_MAX: f64 = 50.0;
const XI_FALLBACK_GUESS: f64 = 1.0;

/// A measured (or simulated) transmission transient for one Rydberg level.
#[derive(Debug, Clone)]
pub struct Transient {
    pub n: u32,
    /// Model parameters for this level; `rydberg.xi` is the starting guess.
    pub params: PhysicalParams,
    pub data: Vec<DataPoint>,
}

impl Transient {
    pub fn from_series(n: u32, params: PhysicalParams, series: &TimeSeries) -> Self {
        let data = series
            .samples
            .iter()
            .map(|s| DataPoint::new(s.t, s.transmission))
            .collect();
        Transient { n, params, data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiEstimate {
    pub n: u32,
    /// MHz; NaN when the fit could not be run.
    pub xi: f64,
    pub ci95: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

impl XiEstimate {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.converged
    }
}

/// Fits `ξ` alone to each transient, holding every other parameter at the
/// entry's configuration. Entries are independent: a failure is recorded
/// in that row only.
pub fn fit_xi_series(entries: &[Transient]) -> Vec<XiEstimate> {
    entries
        .par_iter()
        .map(|entry| {
            let guess = if entry.params.rydberg.xi > 0.0 {
                entry.params.rydberg.xi.min(XI_MAX)
            } else {
                XI_FALLBACK_GUESS
            };
            let problem = FitProblem::new(
                FitModel::BubbleTransient,
                entry.params.clone(),
                entry.data.clone(),
            )
            .bounded(FitParam::Xi, guess, 0.0, XI_MAX);
            match problem.fit() {
                Ok(r) => XiEstimate {
                    n: entry.n,
                    xi: r.best_fit[0],
                    ci95: r.ci95[0],
                    converged: r.converged,
                    error: None,
                },
                Err(e) => XiEstimate {
                    n: entry.n,
                    xi: f64::NAN,
                    ci95: None,
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// `xi = {1.80 ± 0.05, …} MHz for n = {60, …}`.
pub fn format_xi_table(rows: &[XiEstimate]) -> String {
    let mut values = String::new();
    let mut levels = String::new();
    for (i, r) in rows.iter().enumerate() {
        let sep = if i == 0 { "" } else { ", " };
        match (r.error.as_ref(), r.ci95) {
            (Some(_), _) => write!(values, "{sep}failed"),
            (None, Some(ci)) => write!(values, "{sep}{:.2} ± {:.2}", r.xi, ci),
            (None, None) => write!(values, "{sep}{:.2} ± n/a", r.xi),
        }
        .expect("writing to a String");
        write!(levels, "{sep}{}", r.n).expect("writing to a String");
    }
    format!("xi = {{{values}}} MHz for n = {{{levels}}}")
}

/// `y = offset + amplitude · exp(−(t − t₀)/τ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub t0: f64,
    pub amplitude: f64,
    /// μs
    pub tau: f64,
    pub offset: f64,
    pub tau_ci95: Option<f64>,
    pub converged: bool,
}

/// Single-exponential fit to `(t, y)` samples, referenced to the first time.
pub fn fit_exponential_decay(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() || times.len() < 6 {
        return Err(Error::Fit("need at least 6 matching (t, y) samples".into()));
    }
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    if !(span > 0.0) {
        return Err(Error::Fit("decay samples must span a positive time".into()));
    }
    let last = values[values.len() - 1];
    let amplitude = values[0] - last;
    // time for the excess over the final value to fall by 1/e
    let target = last + amplitude / std::f64::consts::E;
    let crossing = times
        .iter()
        .zip(values)
        .find(|(_, v)| (**v - target) * amplitude.signum() <= 0.0)
        .map_or(span / 3.0, |(t, _)| (t - t0).max(span / 100.0));

    let model = |theta: &[f64]| {
        Ok(times
            .iter()
            .map(|t| theta[2] + theta[0] * (-(t - t0) / theta[1]).exp())
            .collect::<Vec<_>>())
    };
    let params = [
        Bounded::free(amplitude, f64::NEG_INFINITY, f64::INFINITY),
        Bounded::free(crossing, span * 1e-4, span * 1e3),
        Bounded::free(last, f64::NEG_INFINITY, f64::INFINITY),
    ];
    let fit = least_squares(
        &model,
        values,
        &vec![1.0; values.len()],
        &params,
        &LmOptions::default(),
    )?;
    Ok(DecayFit {
        t0,
        amplitude: fit.best_fit[0],
        tau: fit.best_fit[1],
        offset: fit.best_fit[2],
        tau_ci95: fit.ci95[1],
        converged: fit.converged,
    })
}

/// Decay time of a transient, fitted from its transmission maximum onward.
pub fn transient_decay_time(series: &TimeSeries) -> Result<DecayFit> {
    let t = series.transmissions();
    let peak = t
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Fit("empty time series".into()))?;
    fit_exponential_decay(&series.times()[peak..], &t[peak..])
}
