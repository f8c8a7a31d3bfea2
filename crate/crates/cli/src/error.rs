use std::path::PathBuf;

use serde_json::json;
use svlens_core::covlap::CovError;
use svlens_core::linalg::LinalgError;
use svlens_core::rmt::RmtError;
use svlens_core::surgery::SurgeryError;
use svlens_core::tensorstore::TensorStoreError;
use svlens_nets::NetsError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no matrices left after filtering")]
    NoMatrices,
    #[error("missing activation dumps: {0}")]
    MissingDumps(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{step}: {source}")]
    Step {
        step: String,
        #[source]
        source: Box<CliError>,
    },
    #[error(transparent)]
    Store(#[from] TensorStoreError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Rmt(#[from] RmtError),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Surgery(#[from] SurgeryError),
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the experiment step that produced it.
    pub fn in_step(self, step: impl Into<String>) -> Self {
        CliError::Step {
            step: step.into(),
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::NoMatrices => "no_matrices",
            CliError::MissingDumps(_) => "missing_dumps",
            CliError::Io { .. } => "io",
            CliError::Step { source, .. } => source.kind(),
            CliError::Store(_) => "container",
            CliError::Linalg(_) => "linalg",
            CliError::Rmt(_) => "spectrum",
            CliError::Cov(_) => "overlap",
            CliError::Surgery(_) => "surgery",
            CliError::Nets(_) => "model",
            CliError::Json(_) => "json",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}
