//! Optical response of a cold atomic ensemble in a cavity driven to Rydberg
//! states.
//!
//! * [`linear`]: closed-form intracavity EIT transmission.
//! * [`interaction`]: C6 coefficients, blockade volume, mean-field constant κ.
//! * [`meanfield`]: self-consistent blockade nonlinearity for S states.
//! * [`bubble`]: time-dependent Rydberg-bubble model with a dark-state channel.
//! * [`fitting`]: least-squares extraction of model parameters with 95% intervals.
//!
//! Frequencies are ordinary frequencies in MHz throughout the public API;
//! see [`units`].

pub mod bubble;
pub mod error;
pub mod fitting;
pub mod interaction;
pub mod linear;
pub mod meanfield;
pub mod params;
pub mod units;

pub use error::{Error, FieldError, Result};
pub use params::{PhysicalParams, ScanSpec, ScanVariable, Series};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/units.md")]
    mod units {}
    #[doc = include_str!("../../../book/src/linear.md")]
    mod linear {}
    #[doc = include_str!("../../../book/src/interactions.md")]
    mod interactions {}
    #[doc = include_str!("../../../book/src/meanfield.md")]
    mod meanfield {}
    #[doc = include_str!("../../../book/src/bubble.md")]
    mod bubble {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
