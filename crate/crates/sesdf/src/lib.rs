//! File formats, scene directories, experiment runners and the command line
//! around [`sesdf_core`].

pub mod config;
pub mod experiment;
pub mod formats;
pub mod json;
pub mod oracle;
pub mod scene;

pub use sesdf_core as core;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Core(#[from] sesdf_core::Error),
    #[error("{path}: scene version {found}, expected {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
}

impl FormatError {
    pub(crate) fn parse(path: &std::path::Path, msg: impl Into<String>) -> Self {
        FormatError::Parse { path: path.to_path_buf(), msg: msg.into() }
    }
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>, FormatError> {
    std::fs::read(path).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), FormatError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_path_buf(), source })?;
        }
    }
    std::fs::write(path, bytes).map_err(|source| FormatError::Io { path: path.to_path_buf(), source })
}

impl From<sesdf_core::geometry::GeometryError> for FormatError {
    fn from(e: sesdf_core::geometry::GeometryError) -> Self {
        FormatError::Core(e.into())
    }
}
