//! Simulation and security analysis for sending-not-sending (SNS) twin-field QKD
//! over an open, interferometer-free channel.
//!
//! The crate is organised along the experiment's own pipeline:
//!
//! - [`params`] — protocol and link configuration with validation of the
//!   asymmetric-source security constraint.
//! - [`channel`] — fibre transmittance, coherent-state interference at the
//!   middle node and the stochastic differential phase of the open link.
//! - [`stabilizer`] — photon-counting PID phase lock on the channel reference,
//!   frequency-offset readout and fringe-visibility estimation.
//! - [`protocol`] — Monte Carlo execution of the 4-intensity SNS protocol and
//!   the detection tallies it produces.
//! - [`analysis`] — Chernoff fluctuation bounds, decoy-state single-photon
//!   bounds, actively odd-parity pairing (AOPP) and the finite-size key rate.
//! - [`optimizer`] — source-parameter search under the SNS security constraint.

pub mod analysis;
pub mod channel;
pub mod fixtures;
pub mod optimizer;
pub mod params;
pub mod protocol;
pub mod stabilizer;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate denominator: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing counting-rate entry for source pair {0}")]
    MissingRate(&'static str),
    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),
    #[error("numeric inversion failed to converge: {0}")]
    NoConvergence(String),
    #[error("trace too short: need at least {need_s} s, have {have_s} s")]
    TraceTooShort { need_s: f64, have_s: f64 },
    #[error("schema version mismatch: expected {expected}, found {found}")]
    SchemaVersion { expected: u32, found: u32 },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("infeasible search space: {0}")]
    InfeasibleSpace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
