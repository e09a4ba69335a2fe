//! Training losses (focal classification, GIoU regression, IoU-confidence
//! BCE) and COCO-style average precision.

mod ap;
mod loss;

pub use ap::{evaluate_ap, ApReport, CategoryAp, EvalConfig, GroundTruth, ScoredBox, RECALL_POINTS};
pub use loss::{
    bce, focal_loss, giou_loss, giou_loss_grad, iou_bce, total_loss, CellOutput, LossBreakdown,
    LossConfig, PROB_EPS,
};

use crate::geometry::GeometryError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("outputs do not line up with the label map: {0}")]
    Misaligned(String),
    #[error("category {0} is not in the class list")]
    UnknownCategory(u64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("AP is undefined without ground truth")]
    NoGroundTruth,
    #[error("IoU thresholds must be strictly increasing and inside (0, 1): {0:?}")]
    InvalidThresholds(Vec<f64>),
}
