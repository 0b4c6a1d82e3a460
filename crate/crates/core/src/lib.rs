//! Multicell Massive MIMO uplink analysis.
//!
//! The crate has two engines that are meant to be checked against each other:
//!
//! * a Monte Carlo simulator that draws spatially correlated Rayleigh fading
//!   channels, forms MMSE estimates under pilot contamination and evaluates the
//!   instantaneous SINR of multicell MMSE (M-MMSE) combining, and
//! * a deterministic-equivalent engine that replaces the expectation over the
//!   channel realizations by the solution of a small fixed-point system.
//!
//! Module layout follows the data flow: [`network`] builds the geometry and the
//! correlation matrices, [`estimation`] derives estimator statistics and samples
//! coherence blocks, [`combining`] evaluates the SINR, [`detequiv`] computes the
//! large-system approximation and [`harness`] runs experiments and writes
//! results.

pub mod combining;
pub mod detequiv;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod network;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
