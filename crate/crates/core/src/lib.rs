//! Open-vocabulary segmentation metrics.
//!
//! Vanilla mIoU, AP and PQ count a prediction as either right or wrong. The
//! open variants weight each confusion by a label-similarity matrix `S`
//! built from WordNet (path or Wu-Palmer) or word embeddings, so that
//! predicting "sofa" for "couch" still earns most of a true positive.
//!
//! ```
//! use openmetrics::semantic::{accumulate_confusion, hard_counts, miou, soft_counts, ClassRaster};
//! use openmetrics::{LabelSpec, Method, SimilarityMatrix};
//!
//! let gt = ClassRaster::new(2, 1, vec![0, 1]).unwrap();
//! let pred = ClassRaster::new(2, 1, vec![0, 0]).unwrap();
//! let cm = accumulate_confusion(&gt, &pred, 2).unwrap();
//!
//! let labels = vec![LabelSpec::named(0, "couch"), LabelSpec::named(1, "sofa")];
//! let s = SimilarityMatrix::new(labels, Method::Path, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
//! let vanilla = miou(&hard_counts(&cm), &cm.presence());
//! let open = miou(&soft_counts(&cm, &s).unwrap(), &cm.presence());
//! assert!(open.mean.unwrap() > vanilla.mean.unwrap());
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod dataio;
pub mod instance;
pub mod panoptic;
pub mod semantic;
pub mod similarity;
pub mod synth;
pub mod wordnet;

pub use dataio::{
    load_manifest, Category, DataError, Dataset, Manifest, MetricReport, RleMask, SegbRaster, Task,
};
pub use similarity::{
    build_matrix, Backend, EmbeddingTable, LabelSpec, Method, SensePolicy, SimilarityError,
    SimilarityMatrix,
};
pub use wordnet::{SynsetId, Taxonomy, WordNetError};

/// Category identifier as it appears in manifests and label files.
pub type CategoryId = u32;

/// Evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Hard counting, class-aware matching.
    Vanilla,
    /// Hard counting after class-agnostic matching (instance tasks only).
    VanillaAgnostic,
    /// Similarity-weighted counting.
    Open,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Vanilla => "vanilla",
            Mode::VanillaAgnostic => "vanilla_agnostic",
            Mode::Open => "open",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Mode::Vanilla),
            "vanilla_agnostic" => Ok(Mode::VanillaAgnostic),
            "open" => Ok(Mode::Open),
            _ => Err(format!("unknown mode {s:?} (vanilla, vanilla_agnostic, open)")),
        }
    }
}

/// Errors from the metric kernels themselves.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("similarity matrix has {found} labels, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class index {class} out of range for {classes} classes")]
    ClassOutOfRange { class: u32, classes: usize },
    #[error("image {0} has no prediction")]
    MissingPrediction(u64),
    #[error("{0}")]
    Invalid(String),
}

/// Any error the library can return.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    WordNet(#[from] WordNetError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl Error {
    pub fn is_io(&self) -> bool {
        match self {
            Error::Data(e) => e.is_io(),
            Error::WordNet(e) => e.is_io(),
            Error::Similarity(SimilarityError::WordNet(e)) => e.is_io(),
            _ => false,
        }
    }
}
