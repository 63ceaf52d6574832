use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidSpec(String),
    #[error("Hilbert-space dimension for N={n_bosons}, M={n_sites} overflows the index type")]
    Overflow { n_bosons: usize, n_sites: usize },
    #[error("invalid Fock state {occupations:?}: {reason}")]
    InvalidState { occupations: Vec<u32>, reason: String },
    #[error("basis index {index} out of range (dimension {dimension})")]
    IndexOutOfRange { index: usize, dimension: usize },
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("dimension {dimension} exceeds the dense limit {limit}")]
    DimensionTooLarge { dimension: usize, limit: usize },
    #[error("eigensolver failed to converge (LAPACK info = {0})")]
    Convergence(i32),
    #[error("eigensolver output failed verification: {0}")]
    InaccurateEigensolve(String),
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("site {site} out of range 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },
    #[error("averaging window is empty")]
    EmptyWindow,
    #[error("only {available} candidate states, {requested} requested")]
    InsufficientCandidates { available: usize, requested: usize },
    #[error("eigenvectors were not computed")]
    MissingEigenvectors,
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("search window [{0}, {1}] contains no grid point")]
    WindowEmpty(f64, f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
