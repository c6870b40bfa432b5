//! Mode-pairing QKD: truncated-Fock channel model, decoy-state estimation,
//! key-rate analysis and an event-level Monte Carlo of the protocol.

pub mod channel;
pub mod config;
pub mod decoy;
pub mod fock;
pub mod keyrate;
pub mod pairing;
pub mod protosim;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpqkdError {
    /// Discarded Poisson tail beyond the cutoff exceeds the 1e-12 budget.
    #[error("truncation error: Poisson tail {tail:.3e} beyond cutoff {cutoff} exceeds 1e-12 (intensity {intensity})")]
    Truncation {
        intensity: f64,
        cutoff: usize,
        tail: f64,
    },
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    /// Precondition mu != nu for the decoy inversion.
    #[error("degenerate decoy system: mu == nu")]
    DegenerateDecoy,
    #[error("photon number {m} exceeds cutoff {cutoff}")]
    PhotonAboveCutoff { m: usize, cutoff: usize },
    /// s11z = 0: the estimated single-photon fraction vanished, the protocol aborts.
    #[error("abort: s11z = 0, phase-error rate undefined")]
    AbortRate,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl MpqkdError {
    /// Stable machine-readable category slug (used by the CLI and the C ABI).
    pub fn category(&self) -> &'static str {
        match self {
            MpqkdError::Truncation { .. } => "truncation",
            MpqkdError::InvalidConfig { .. } => "invalid-config",
            MpqkdError::DegenerateDecoy => "degenerate-decoy",
            MpqkdError::PhotonAboveCutoff { .. } => "photon-above-cutoff",
            MpqkdError::AbortRate => "abort-rate",
            MpqkdError::Io(_) => "io",
            MpqkdError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, MpqkdError>;
