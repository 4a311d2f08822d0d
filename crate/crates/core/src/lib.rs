//! Simulation and rate analysis for a driven qubit under repeated or
//! continuous measurement of `sigma_z`.
//!
//! Units: every rate is an angular frequency or inverse time in the same
//! unit as `omega_r`; times are in its inverse.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod continuous;
pub mod ensemble;
pub mod error;
pub mod output;
pub mod pulsed;
pub mod qubit;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod trajectory;
pub mod validate;

pub use error::{Error, Result};
pub use qubit::{Bloch, ModelParams, QubitState};
pub use stats::EnsembleResult;
pub use trajectory::TrajectoryRecord;
