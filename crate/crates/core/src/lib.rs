//! Cycle-level simulator of a two-detector photonic random number generator
//! and the statistical toolkit used to measure its output.
//!
//! The crate is organised bottom-up:
//!
//! - [`stochastic`]: per-cycle click sampling for two Geiger-mode detectors
//!   (dark counts, late clicks, backflash, afterpulsing) and the scalar
//!   physics formulas behind it.
//! - [`postproc`]: the flip/hold post-processing state machine and the
//!   closed-form flip/hold probabilities of its output.
//! - [`device`]: the cycle engine with its timing rules and the bitrate
//!   feedback loop.
//! - [`analysis`]: bit statistics, correlation histograms, exponential-fit
//!   residuals and periodograms.
//! - [`formats`]: the on-disk formats (packed bit files and CSV tables).
//! - [`validation`]: the acceptance checks, shared by the CLI and the test suite.
//!
//! Data-parallel work (Monte Carlo batches, chunked bit statistics, histogram
//! building) goes through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to a sequential loop otherwise.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod device;
pub mod error;
pub mod formats;
pub mod par;
pub mod postproc;
pub mod rng;
pub mod stochastic;
pub mod validation;

pub use error::{Error, Result};
