//! Python module `visdet`. Boxes cross the boundary as
//! `(x_min, y_min, x_max, y_max)` tuples and images as packed RGB bytes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use visdet_core::barrier_distance::{self as mbd, ImagePatch, MbdConfig};
use visdet_core::box_fusion::{self, FusionConfig, Prediction, ScoreMode};
use visdet_core::geometry::{self, Box2D};
use visdet_core::label_assignment::{self as la, InstanceAnnotation, SamplingConfig};
use visdet_core::losses_metrics::{self as lm, EvalConfig, GroundTruth, LossConfig, ScoredBox};
use visdet_core::pipeline_io;
use visdet_core::visibility_grid::VisibilityThreshold;

type BoxTuple = (f64, f64, f64, f64);

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_box(b: BoxTuple) -> PyResult<Box2D> {
    Box2D::new(b.0, b.1, b.2, b.3).map_err(err)
}

fn from_box(b: &Box2D) -> BoxTuple {
    (b.x_min, b.y_min, b.x_max, b.y_max)
}

fn patch(width: usize, height: usize, rgb: &[u8]) -> PyResult<ImagePatch> {
    ImagePatch::from_rgb_bytes(width, height, rgb).map_err(err)
}

#[pyfunction]
fn iou(a: BoxTuple, b: BoxTuple) -> PyResult<f64> {
    geometry::iou(&to_box(a)?, &to_box(b)?).map_err(err)
}

#[pyfunction]
fn giou(a: BoxTuple, b: BoxTuple) -> PyResult<f64> {
    geometry::giou(&to_box(a)?, &to_box(b)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (bbox, num_levels = 5))]
fn assign_level(bbox: BoxTuple, num_levels: usize) -> PyResult<u8> {
    Ok(la::assign_level(&to_box(bbox)?, num_levels))
}

/// Visibility distance of one patch.
#[pyclass(frozen, get_all)]
struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    barrier: Vec<u8>,
    euclid: Vec<f64>,
}

#[pymethods]
impl DistanceMap {
    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.width || y >= self.height {
            return Err(err(format!("({x}, {y}) outside {}x{}", self.width, self.height)));
        }
        Ok(self.values[y * self.width + x])
    }

    /// 16-bit PGM bytes, fixed point x64.
    fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        mbd::pgm::write_pgm16(&mut buf, self.width, self.height, &self.values).expect("in memory");
        buf
    }
}

#[pyfunction]
#[pyo3(signature = (width, height, rgb, alpha = 0.1, seed_step = 1, passes = 3))]
fn visibility_distance_map(
    width: usize,
    height: usize,
    rgb: &[u8],
    alpha: f64,
    seed_step: usize,
    passes: usize,
) -> PyResult<DistanceMap> {
    let cfg = MbdConfig { alpha, seed_step, passes };
    let d = mbd::visibility_distance_map(&patch(width, height, rgb)?, &cfg).map_err(err)?;
    Ok(DistanceMap {
        width: d.width,
        height: d.height,
        values: d.values,
        barrier: d.barrier,
        euclid: d.euclid,
    })
}

#[pyfunction]
#[pyo3(signature = (width, height, rgb, seed_step = 1, passes = 3))]
fn fast_mbd(width: usize, height: usize, rgb: &[u8], seed_step: usize, passes: usize) -> PyResult<Vec<u8>> {
    let p = patch(width, height, rgb)?;
    let seeds = mbd::build_seeds(&p, seed_step).map_err(err)?;
    Ok(mbd::fast_mbd(&p, &seeds, passes).values)
}

#[pyfunction]
#[pyo3(signature = (width, height, rgb, seed_step = 1))]
fn exact_mbd(width: usize, height: usize, rgb: &[u8], seed_step: usize) -> PyResult<Vec<u8>> {
    let p = patch(width, height, rgb)?;
    let seeds = mbd::build_seeds(&p, seed_step).map_err(err)?;
    Ok(mbd::exact_mbd(&p, &seeds).map_err(err)?.values)
}

/// Label map JSON for one image; `annotations` are `(instance_id, category_id, box)`.
#[pyfunction]
#[pyo3(signature = (width, height, rgb, image_id, annotations, k = 10, threshold = 0.25, rng_seed = 0))]
#[allow(clippy::too_many_arguments)]
fn assign_image(
    width: usize,
    height: usize,
    rgb: &[u8],
    image_id: u64,
    annotations: Vec<(u64, u64, BoxTuple)>,
    k: usize,
    threshold: f64,
    rng_seed: u64,
) -> PyResult<String> {
    let img = patch(width, height, rgb)?;
    let anns = annotations
        .into_iter()
        .map(|(instance_id, category_id, b)| {
            Ok(InstanceAnnotation { instance_id, image_id, category_id, bbox: to_box(b)? })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = SamplingConfig {
        k,
        threshold: VisibilityThreshold::new(threshold).map_err(err)?,
        rng_seed,
        ..SamplingConfig::default()
    };
    let map = la::assign_image(&img, image_id, &anns, &cfg, &MbdConfig::default()).map_err(err)?;
    Ok(pipeline_io::label_maps_to_json(&[map]))
}

/// Fuses `(box, category_id, cls_score, confidence)` predictions into
/// `(box, category_id, score, cluster_size)` detections.
#[pyfunction]
#[pyo3(signature = (predictions, score_threshold = 0.05, cluster_iou = 0.6, score_mode = "geomean"))]
fn fuse(
    predictions: Vec<(BoxTuple, u64, f64, f64)>,
    score_threshold: f64,
    cluster_iou: f64,
    score_mode: &str,
) -> PyResult<Vec<(BoxTuple, u64, f64, usize)>> {
    let score_mode = match score_mode {
        "geomean" => ScoreMode::Geomean,
        "seed" => ScoreMode::Seed,
        other => return Err(err(format!("unknown score mode {other:?}"))),
    };
    let preds = predictions
        .into_iter()
        .map(|(b, category_id, cls_score, confidence)| {
            Ok(Prediction { bbox: to_box(b)?, category_id, cls_score, confidence, cell: None })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = FusionConfig { score_threshold, cluster_iou, score_mode };
    Ok(box_fusion::fuse(&preds, &cfg)
        .iter()
        .map(|d| (from_box(&d.bbox), d.category_id, d.score, d.cluster_size))
        .collect())
}

#[pyfunction]
#[pyo3(signature = (p, target, gamma = 2.0, alpha = 0.25))]
fn focal_loss(p: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    lm::focal_loss(p, target, &LossConfig { focal_gamma: gamma, focal_alpha: alpha })
}

#[pyfunction]
fn iou_bce(pred_conf: f64, target_iou: f64) -> f64 {
    lm::iou_bce(pred_conf, target_iou)
}

#[pyfunction]
fn giou_loss(pred: BoxTuple, gt: BoxTuple) -> PyResult<f64> {
    lm::giou_loss(&to_box(pred)?, &to_box(gt)?).map_err(err)
}

/// Loss and gradient over the 4 predicted then the 4 target coordinates.
#[pyfunction]
fn giou_loss_grad(pred: BoxTuple, gt: BoxTuple) -> PyResult<(f64, Vec<f64>)> {
    let (l, g) = lm::giou_loss_grad(&to_box(pred)?, &to_box(gt)?).map_err(err)?;
    Ok((l, g.to_vec()))
}

/// `detections`: `(image_id, category_id, box, score)`; `ground_truth`:
/// `(image_id, category_id, box)`. Returns `{"ap", "ap50", "ap75", "per_category"}`.
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, iou_thresholds = None))]
fn evaluate_ap<'py>(
    py: Python<'py>,
    detections: Vec<(u64, u64, BoxTuple, f64)>,
    ground_truth: Vec<(u64, u64, BoxTuple)>,
    iou_thresholds: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let dets = detections
        .into_iter()
        .map(|(image_id, category_id, b, score)| {
            Ok(ScoredBox { image_id, category_id, bbox: to_box(b)?, score })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let gts = ground_truth
        .into_iter()
        .map(|(image_id, category_id, b)| Ok(GroundTruth { image_id, category_id, bbox: to_box(b)? }))
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = match iou_thresholds {
        Some(t) => EvalConfig::new(t).map_err(err)?,
        None => EvalConfig::default(),
    };
    let report = lm::evaluate_ap(&dets, &gts, &cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("ap", report.ap)?;
    out.set_item("ap50", report.ap50)?;
    out.set_item("ap75", report.ap75)?;
    let per_cat = PyDict::new(py);
    for c in &report.per_category {
        per_cat.set_item(c.category_id, (c.ap, c.ap50, c.ap75))?;
    }
    out.set_item("per_category", per_cat)?;
    Ok(out)
}

#[pymodule]
fn visdet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<DistanceMap>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(giou, m)?)?;
    m.add_function(wrap_pyfunction!(assign_level, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_distance_map, m)?)?;
    m.add_function(wrap_pyfunction!(fast_mbd, m)?)?;
    m.add_function(wrap_pyfunction!(exact_mbd, m)?)?;
    m.add_function(wrap_pyfunction!(assign_image, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(focal_loss, m)?)?;
    m.add_function(wrap_pyfunction!(iou_bce, m)?)?;
    m.add_function(wrap_pyfunction!(giou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(giou_loss_grad, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_ap, m)?)?;
    Ok(())
}
