//! Simulation and analysis of heralded narrowband photon pairs.
//!
//! The crate is organised around time-tag streams:
//!
//! - [`tagstream`]: the time-tag data model, its binary file format, merging and gating.
//! - [`simulator`]: seeded Monte Carlo generation of detector time tags from a
//!   cavity-enhanced, frequency non-degenerate pair source, and cluster spectra.
//! - [`correlator`]: multi-stop correlation histograms, normalized g² estimators,
//!   heralded autocorrelation (triple-coincidence) histograms and coincidence metrics.
//! - [`fitting`]: weighted Levenberg-Marquardt fits of the two-sided and symmetric
//!   exponential peak models.
//! - [`models`]: closed-form relations and the cavity escape-efficiency solver.
//! - [`cli`]: configuration, experiment presets, sweeps and report emission used by
//!   the `biphoton` binary.
//!
//! Runnable walkthroughs for each capability live in the crate's `examples/`
//! directory.

pub mod cli;
pub mod correlator;
pub mod fitting;
pub mod models;
pub mod simulator;
pub mod tagstream;

mod error;

pub use error::{Error, Result};

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;
/// Picoseconds per nanosecond.
pub const PS_PER_NS: i64 = 1_000;
