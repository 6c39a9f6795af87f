//! Configuration files, external measurement datasets, and CSV result export.

mod config;
mod dataset;
mod export;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{load_config, InitKind, ScenarioConfig, REFERENCE_CONFIG};
pub use dataset::{export_dataset, load_dataset, ExternalDataset, NODE_HEADER, RANGE_HEADER};
pub use export::{
    export_estimates, export_results, export_sweep, ecdf_file_name, trace_file_name, ResultTables, ECDF_HEADER, METRICS_HEADER,
    TRACE_HEADER, SWEEP_HEADER,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("could not parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{}: {message}", path.display())]
    Dataset { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
}

impl DataError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        DataError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn invalid(key: &'static str, message: impl Into<String>) -> Self {
        DataError::Invalid { key, message: message.into() }
    }

    pub(crate) fn dataset(path: impl AsRef<Path>, message: impl Into<String>) -> Self {
        DataError::Dataset { path: path.as_ref().to_path_buf(), message: message.into() }
    }

    pub(crate) fn csv(path: impl AsRef<Path>, source: csv::Error) -> Self {
        DataError::Csv { path: path.as_ref().to_path_buf(), source }
    }
}
