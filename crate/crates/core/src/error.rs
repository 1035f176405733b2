use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("event {event} is not enabled in state {state:?}")]
    InvalidEvent { event: String, state: Vec<u64> },

    #[error("parameter regime rejected: {0}")]
    RegimeRejected(String),

    /// The per-replication event budget ran out. The partial trajectory is
    /// kept so callers can inspect how far the run got.
    #[error("event cap of {cap} exceeded in replication {replication}")]
    EventCapExceeded {
        cap: u64,
        replication: u64,
        partial: Box<Trajectory>,
    },

    #[error("first passage unreachable: absorbed with {lost} lost files below threshold {threshold}")]
    PassageUnreachable { lost: u64, threshold: f64 },

    #[error("empty occupancy window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("unsupported dimension d = {0}")]
    UnsupportedDimension(usize),

    #[error("could not bracket threshold t_{level}: {detail}")]
    RootBracketFailure { level: usize, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
