//! Semi-classical Rydberg-bubble model.
//!
//! The blockade splits the cloud into `N / n_b` identical bubbles that hold
//! at most one Rydberg excitation. Each bubble lives on a truncated boson
//! mode (collective intermediate-state excitations) times the collective
//! internal states `{G, R, S}`, where `S` is a dark Rydberg level reached
//! from `R` at a rate `ξ ⟨σ_RR⟩(t)`. The cavity field is a classical
//! amplitude driven by the probe and loaded by every bubble.
//!
//! Time is in μs and every rate enters the equations in rad/μs.

mod evolve;
mod integrator;
mod model;
mod operators;

pub use evolve::{
    cutoff_deviation, evolve, evolve_at, evolve_model, sample_times, steady_transmission_bubble,
    BubbleState, EvolveOptions, Sample, SteadyBubble, TimeSeries, STEADY_T_MAX, STEADY_WINDOW,
    TRACE_ABORT,
};
pub use integrator::{Dopri5, IntegrationStats};
pub use model::{dissipator, BubbleModel, BubbleRates};
pub use operators::{basis_index, build_operators, BubbleOperators, Internal};
