use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid mesh: {0}")]
    Validation(String),
    #[error("unsupported mesh format `{0}` (expected off or obj)")]
    UnsupportedFormat(String),
    #[error("vertex {vertex}: only {available} vertices reachable, patch needs {required}")]
    PatchTooSmall {
        vertex: usize,
        available: usize,
        required: usize,
    },
    #[error("vertex {vertex}: quadratic fit is rank deficient at ring depth {depth}")]
    RankDeficientPatch { vertex: usize, depth: usize },
    #[error("time grid needs at least 2 intervals, got {0}")]
    GridTooSmall(usize),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("direct solve of {size} unknowns exceeds the guard of {limit}")]
    SizeGuard { size: usize, limit: usize },
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("no admissible root for the projection multiplier (alpha = {alpha}, |beta| = {beta_norm})")]
    NoRootFound { alpha: f64, beta_norm: f64 },
    #[error("endpoint densities differ in mass: {mass0} vs {mass1}")]
    MassMismatch { mass0: f64, mass1: f64 },
    #[error("density must be nonnegative and finite (vertex {0})")]
    InvalidDensity(usize),
    #[error("non-finite value detected at iteration {iteration}")]
    DivergenceDetected { iteration: usize },
    #[error("incompatible density spec: {0}")]
    IncompatibleSpec(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
