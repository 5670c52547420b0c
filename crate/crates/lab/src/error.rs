use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("config is for experiment `{found}` but `{expected}` was requested")]
    KindMismatch { expected: String, found: String },
    #[error(transparent)]
    Core(#[from] canopy_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
