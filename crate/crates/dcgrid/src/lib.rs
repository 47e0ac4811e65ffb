//! Droop-controlled DC microgrid analysis.
//!
//! The crate models a DC grid whose generator nodes run a primary
//! decentralized droop controller and, optionally, a secondary distributed
//! PI controller that drives all nodes to a common current ratio. It
//! provides:
//!
//! * [`network`] — grid description and Kron reduction to a generator-only
//!   conductance model,
//! * [`droop`] — the primary closed loop, its decay-rate bound, steady
//!   states, and current-sharing deviation diagnostics,
//! * [`coop`] — the cooperative closed loop, semistability verdicts
//!   (spectral and sufficient-condition based), and exact steady-state
//!   prediction,
//! * [`sim`] — LTI time-domain simulation with exact (matrix-exponential)
//!   and RK4 integrators,
//! * [`scenario`] / [`report`] — JSON scenario ingestion and
//!   machine-readable result emission for the `dcgrid` binary.

pub mod coop;
pub mod droop;
pub mod network;
pub mod numerics;
pub mod report;
pub mod scenario;
pub mod sim;

use thiserror::Error;

/// Crate-wide error type. `InvalidInput` maps to CLI exit code 2,
/// `NumericFailure` to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
