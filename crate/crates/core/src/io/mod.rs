//! File formats: OpenPose JSON, the JSON Lines dataset, model files, reports.

mod dataset;
mod model_file;
mod openpose;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::regressor::ModelError;

pub use dataset::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use model_file::{
    load_model, load_model_dir, model_from_json, model_to_json, save_model, save_model_dir, MODEL_FORMAT_VERSION,
};
pub use openpose::{parse_openpose_json, select_person, serialize_openpose};
pub use report::{angles_csv, ReportFormat, ReportRow, ReportTable};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("person {person}: pose_keypoints_2d has {actual} numbers, expected {expected}")]
    WrongArrayLength { person: usize, expected: usize, actual: usize },
    #[error("no people in the document")]
    EmptyPeople,
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: schema mismatch: {message}")]
    SchemaMismatch { line: usize, message: String },
    #[error("unsupported model format_version {0}")]
    UnsupportedFormat(u64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed write never leaves a partial file behind.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<(), IoError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), IoError>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush().map_err(|e| IoError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}
