use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("region '{label}' is degenerate: area {area:.4} m² is below spacing² = {min:.4} m²")]
    EmptyRegion { label: String, area: f64, min: f64 },

    #[error("data corruption: {0}")]
    DataCorruption(String),

    #[error("numerical blowup at step {step}, particle {particle}: {what}")]
    NumericalBlowup {
        step: u64,
        particle: usize,
        what: String,
    },

    #[error("time step {dt:.3e} s exceeds the CFL limit {limit:.3e} s")]
    CflViolation { dt: f64, limit: f64 },

    #[error("gravity preload did not converge within {steps} steps (kinetic energy {ke_per_mass:.3e} J/kg)")]
    PreloadFailure { steps: u64, ke_per_mass: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scene not found: {0}")]
    SceneNotFound(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse classification used for process exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::NumericalBlowup { .. } | Error::PreloadFailure { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numerical,
}
