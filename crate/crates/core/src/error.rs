use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon exhausted: {0}")]
    HorizonExhausted(String),

    #[error("insufficient {side} horizon: need {needed}, window has {available}")]
    InsufficientHorizon {
        side: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("past horizon mismatch: {left} vs {right}")]
    HorizonMismatch { left: usize, right: usize },

    #[error("window must be past-only (future horizon {0})")]
    NotPastOnly(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid window literal: {0}")]
    InvalidWindow(String),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),

    #[error("unknown input process `{0}`")]
    UnknownProcess(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed diagram: {0}")]
    MalformedDiagram(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
