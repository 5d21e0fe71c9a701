//! File formats: tensors, bundle directories and rendered reports.

pub mod bundle;
pub mod render;
pub mod tensor;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{DataError, Finding};

pub use bundle::{
    load_bundle, load_bundle_with_warnings, save_bundle, BundleManifest, LoadedBundle,
};
pub use render::{parse_reports, render_extremes, render_report, RenderedReport, ReportFormat};
pub use tensor::{read_labels, read_tensor, write_labels, write_tensor, TensorFormat};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported tensor dtype: {0}")]
    UnsupportedDtype(String),
    #[error("malformed tensor file: {0}")]
    MalformedHeader(String),
    #[error("ragged or empty rows: {0}")]
    RaggedRows(String),
    #[error("tensor `{0}` contains NaN or infinite values")]
    NonFinite(String),
    #[error("CSV error: {0}")]
    Csv(String),
    #[error("JSON error: {0}")]
    Json(String),
    #[error("no bundle manifest at {0}")]
    MissingManifest(PathBuf),
    #[error("manifest is missing the `{0}` role")]
    MissingRole(&'static str),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("bundle failed validation: {}", join_findings(.0))]
    ValidationFailed(Vec<Finding>),
    #[error("no reports to render")]
    EmptyReportSet,
    #[error("unknown report format `{0}`")]
    UnknownFormat(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn join_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }

    /// File-system failures as opposed to content problems.
    pub fn is_file_error(&self) -> bool {
        matches!(self, IoError::Io { .. } | IoError::MissingManifest(_))
    }
}
