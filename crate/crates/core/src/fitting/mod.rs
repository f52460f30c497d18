//! Weighted nonlinear least squares against the transmission models.
//!
//! The minimizer is a box-constrained Levenberg-Marquardt iteration with a
//! central-difference Jacobian. Uncertainties come from the linearized
//! covariance `s² (JᵀWJ)⁻¹` scaled by the residual variance, and are
//! reported as 95% half-widths.

mod lm;
mod problem;
mod xi;

pub use lm::{least_squares, richardson_ratio, Bounded, FitResult, LmOptions, Z95};
pub use problem::{
    read_data_csv, DataPoint, FitModel, FitParam, FitProblem, FitReport, ParamReport, ParamSpec,
    Weighting,
};
pub use xi::{
    fit_exponential_decay, fit_xi_series, format_xi_table, transient_decay_time, DecayFit,
    Transient, XiEstimate,
};
