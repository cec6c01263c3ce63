use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports, grouped by category so the CLI can
/// map them onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate mask: {0}")]
    DegenerateMask(String),

    #[error("solver diverged with step size {step}: objective {objective:.6e} exceeds 10x the initial {initial:.6e}")]
    Divergence { step: f64, objective: f64, initial: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {source_name} at byte {offset}: {message}")]
    Parse { source_name: String, offset: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn sizing(msg: impl Into<String>) -> Self {
        Error::Sizing(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short category label, stable for scripting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Sizing(_) => "sizing",
            Error::Argument(_) => "argument",
            Error::Domain(_) => "domain",
            Error::DegenerateMask(_) => "degenerate-mask",
            Error::Divergence { .. } => "divergence",
            Error::Numerical(_) => "numerical",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
