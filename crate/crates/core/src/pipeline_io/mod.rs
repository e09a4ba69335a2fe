//! File formats and the batch pipelines behind the command-line tool.

mod image;
pub mod json;
mod labels;
mod manifest;
mod records;
mod run;

pub use self::image::{load_image, load_image_checked, write_ppm};
pub use labels::{label_maps_to_json, parse_label_maps, LabelFile};
pub use manifest::{
    load_manifest, parse_manifest, AnnotationRecord, Category, DatasetManifest, ImageRecord,
    ManifestLoad,
};
pub use records::{
    load_detections, load_predictions, parse_detections, parse_predictions, DetectionRecord,
    PredictionRecord,
};
pub use run::{
    ground_truth, parse_iou_range, run_assign, run_eval, run_fuse, run_mbd_oracle, run_visibility,
    VisibilityOutput,
};

use crate::barrier_distance::MbdError;
use crate::label_assignment::AssignError;
use crate::losses_metrics::MetricsError;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{source_name}: parse error: {message}")]
    Parse { source_name: String, message: String },
    #[error("{kind}[{index}]: {field} {id} does not resolve")]
    DanglingReference {
        kind: &'static str,
        index: usize,
        field: &'static str,
        id: u64,
    },
    #[error("{kind}[{index}]: {message}")]
    InvalidRecord {
        kind: &'static str,
        index: usize,
        message: String,
    },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("{path}: unsupported image: {message}")]
    UnsupportedImage { path: String, message: String },
    #[error("{path}: image is {actual:?} but the manifest says {expected:?}")]
    DimensionMismatch {
        path: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("image {image_id}: {source}")]
    Assign {
        image_id: u64,
        #[source]
        source: AssignError,
    },
    #[error("{context}: {source}")]
    Mbd {
        context: String,
        #[source]
        source: MbdError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
