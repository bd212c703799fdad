//! File formats: SEGB rasters, RLE masks (plain and COCO-compressed),
//! dataset manifests and metric reports.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod coco;
pub mod manifest;
pub mod report;
pub mod rle;
pub mod segb;

pub use coco::{coco_counts_decode, coco_counts_encode};
pub use manifest::{load_manifest, Category, Dataset, Manifest, Task};
pub use report::{MetricReport, Provenance, SimilarityRef};
pub use rle::RleMask;
pub use segb::SegbRaster;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not a SEGB file (bad magic)")]
    BadMagic,
    #[error("unsupported SEGB version {0}")]
    BadVersion(u8),
    #[error("bad SEGB header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("{0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("bad RLE counts: {0}")]
    BadCounts(String),
    #[error("byte {byte} at position {position} is not a compressed-counts character")]
    BadChar { position: usize, byte: u8 },
    #[error("compressed count overflows at position {0}")]
    Overflow(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("open-mode reports must record a similarity-matrix digest")]
    MissingSimilarityDigest,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DataError>,
    },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (DataError::Io { .. } | DataError::InFile { .. }) => e,
            e => DataError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        DataError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures reading or writing files, as opposed to bad content.
    pub fn is_io(&self) -> bool {
        match self {
            DataError::Io { .. } => true,
            DataError::InFile { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
