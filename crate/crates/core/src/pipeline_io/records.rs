//! Prediction and detection files: JSON arrays of per-box records.

use super::PipelineError;
use crate::box_fusion::{Detection, Prediction};
use crate::geometry::Box2D;
use crate::losses_metrics::ScoredBox;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    pub cls_score: f64,
    pub confidence: f64,
}

/// Fused output; `cls_score` carries the detection score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(alias = "score")]
    pub cls_score: f64,
    #[serde(default = "one")]
    pub cluster_size: usize,
}

fn one() -> usize {
    1
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn xywh_box(bbox: [f64; 4], kind: &'static str, index: usize) -> Result<Box2D, PipelineError> {
    let [x, y, w, h] = bbox;
    if !(w >= 0.0 && h >= 0.0) {
        return Err(PipelineError::InvalidRecord {
            kind,
            index,
            message: format!("bbox {bbox:?} has negative width or height"),
        });
    }
    Box2D::from_xywh(x, y, w, h).map_err(|e| PipelineError::InvalidRecord {
        kind,
        index,
        message: e.to_string(),
    })
}

impl PredictionRecord {
    pub fn to_prediction(&self, index: usize) -> Result<Prediction, PipelineError> {
        if !unit(self.cls_score) || !unit(self.confidence) {
            return Err(PipelineError::InvalidRecord {
                kind: "predictions",
                index,
                message: "cls_score and confidence must lie in [0, 1]".into(),
            });
        }
        Ok(Prediction {
            bbox: xywh_box(self.bbox, "predictions", index)?,
            category_id: self.category_id,
            cls_score: self.cls_score,
            confidence: self.confidence,
            cell: None,
        })
    }
}

impl DetectionRecord {
    pub fn from_detection(image_id: u64, d: &Detection) -> Self {
        Self {
            image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_xywh(),
            cls_score: d.score,
            cluster_size: d.cluster_size,
        }
    }

    pub fn to_scored(&self, index: usize) -> Result<ScoredBox, PipelineError> {
        if !unit(self.cls_score) {
            return Err(PipelineError::InvalidRecord {
                kind: "detections",
                index,
                message: "score must lie in [0, 1]".into(),
            });
        }
        Ok(ScoredBox {
            image_id: self.image_id,
            category_id: self.category_id,
            bbox: xywh_box(self.bbox, "detections", index)?,
            score: self.cls_score,
        })
    }
}

fn parse_array<T: for<'de> Deserialize<'de>>(text: &str, source: &str) -> Result<Vec<T>, PipelineError> {
    serde_json::from_str(text).map_err(|e| PipelineError::Parse {
        source_name: source.to_string(),
        message: e.to_string(),
    })
}

pub fn parse_predictions(text: &str, source: &str) -> Result<Vec<PredictionRecord>, PipelineError> {
    let recs: Vec<PredictionRecord> = parse_array(text, source)?;
    for (i, r) in recs.iter().enumerate() {
        r.to_prediction(i)?;
    }
    Ok(recs)
}

pub fn parse_detections(text: &str, source: &str) -> Result<Vec<DetectionRecord>, PipelineError> {
    let recs: Vec<DetectionRecord> = parse_array(text, source)?;
    for (i, r) in recs.iter().enumerate() {
        r.to_scored(i)?;
    }
    Ok(recs)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_predictions(&text, &path.display().to_string())
}

pub fn load_detections(path: &Path) -> Result<Vec<DetectionRecord>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_detections(&text, &path.display().to_string())
}
