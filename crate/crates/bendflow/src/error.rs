use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid needs at least 8 cells, got {n}")]
    GridTooSmall { n: usize },

    #[error("spacing 1/{n} is not exactly representable (h*n != 1)")]
    SpacingNotExact { n: usize },

    #[error("grid mismatch: {left} vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("boundary values must vanish (u0 = {left}, un = {right})")]
    BoundaryNonzero { left: f64, right: f64 },

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("energy density overflowed at node {node}")]
    Overflow { node: usize },

    #[error("iterate violates the obstacle at node {node} by {gap:e}")]
    Inadmissible { node: usize, gap: f64 },

    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("quadratic program did not converge after {iterations} iterations")]
    QpNonconvergence { iterations: usize },

    #[error("step solver failed: residual {residual:e} after {iterations} iterations")]
    StepFailure {
        residual: f64,
        iterations: usize,
        best: Box<crate::grid::GridFunction>,
    },

    #[error("flow aborted at step {step}: {source}")]
    FlowFailure {
        step: usize,
        #[source]
        source: Box<Error>,
        partial: Box<crate::mms::Trajectory>,
    },

    #[error("{what}: series did not converge after {terms} terms")]
    Evaluation { what: &'static str, terms: usize },

    #[error("{what}: argument {value} outside the domain")]
    Domain { what: &'static str, value: f64 },

    #[error("preset '{name}' failed validation: {reason}")]
    Preset { name: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
