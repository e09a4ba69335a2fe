//! Batch pipelines. Work is spread over a rayon pool of the requested size
//! and results are merged in image-id order, so outputs do not depend on
//! the thread count.

use super::image::{load_image, load_image_checked};
use super::manifest::{DatasetManifest, ImageRecord};
use super::records::{DetectionRecord, PredictionRecord};
use super::PipelineError;
use crate::barrier_distance::{
    build_seeds, exact_mbd, pgm::write_pgm16, visibility_distance_map, BarrierMap, MbdConfig,
};
use crate::box_fusion::{fuse, FusionConfig};
use crate::label_assignment::{assign_image, LabelMap, SamplingConfig};
use crate::losses_metrics::{evaluate_ap, ApReport, EvalConfig, GroundTruth};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

fn with_pool<T: Send>(
    threads: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    if threads == 0 {
        return Err(PipelineError::InvalidArgument("--threads must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::InvalidArgument(e.to_string()))?;
    Ok(pool.install(f))
}

fn mbd_error(context: String) -> impl FnOnce(crate::barrier_distance::MbdError) -> PipelineError {
    move |source| PipelineError::Mbd { context, source }
}

fn load_for(images_dir: &Path, rec: &ImageRecord) -> Result<crate::barrier_distance::ImagePatch, PipelineError> {
    load_image_checked(&images_dir.join(&rec.file_name), rec.width, rec.height)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VisibilityOutput {
    pub written: Vec<PathBuf>,
    /// `(annotation_id, reason)` for boxes too small for the transform.
    pub skipped: Vec<(u64, String)>,
}

/// Writes one `<image_id>_<annotation_id>.pgm` distance map per annotation.
pub fn run_visibility(
    images_dir: &Path,
    manifest: &DatasetManifest,
    out_dir: &Path,
    mbd: &MbdConfig,
    threads: usize,
) -> Result<VisibilityOutput, PipelineError> {
    mbd.validate().map_err(mbd_error("visibility".into()))?;
    let images = manifest.sorted_images();
    type Encoded = Vec<(u64, Result<Vec<u8>, String>)>;
    let per_image: Vec<Result<(u64, Encoded), PipelineError>> = with_pool(threads, || {
        images
            .par_iter()
            .map(|rec| {
                let img = load_for(images_dir, rec)?;
                let maps = manifest
                    .annotations_for(rec.id)
                    .into_iter()
                    .map(|ann| {
                        let encoded = img
                            .crop(ann.bbox.pixel_span())
                            .and_then(|patch| visibility_distance_map(&patch, mbd))
                            .map(|dist| {
                                let mut buf = Vec::new();
                                dist.write_pgm(&mut buf).expect("writing to memory");
                                buf
                            })
                            .map_err(|e| e.to_string());
                        (ann.id, encoded)
                    })
                    .collect();
                Ok((rec.id, maps))
            })
            .collect()
    })?;

    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut out = VisibilityOutput::default();
    for item in per_image {
        let (image_id, maps) = item?;
        for (ann_id, encoded) in maps {
            match encoded {
                Ok(bytes) => {
                    let path = out_dir.join(format!("{image_id}_{ann_id}.pgm"));
                    std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
                    out.written.push(path);
                }
                Err(reason) => {
                    log::warn!("annotation {ann_id} (image {image_id}) skipped: {reason}");
                    out.skipped.push((ann_id, reason));
                }
            }
        }
    }
    Ok(out)
}

/// Label maps for every image of the manifest, in image-id order.
pub fn run_assign(
    images_dir: &Path,
    manifest: &DatasetManifest,
    cfg: &SamplingConfig,
    mbd: &MbdConfig,
    threads: usize,
) -> Result<Vec<LabelMap>, PipelineError> {
    let images = manifest.sorted_images();
    let maps: Vec<Result<LabelMap, PipelineError>> = with_pool(threads, || {
        images
            .par_iter()
            .map(|rec| {
                let img = load_for(images_dir, rec)?;
                let instances = manifest.instances_for(rec.id);
                assign_image(&img, rec.id, &instances, cfg, mbd)
                    .map_err(|source| PipelineError::Assign { image_id: rec.id, source })
            })
            .collect()
    })?;
    let maps = maps.into_iter().collect::<Result<Vec<_>, _>>()?;
    for m in &maps {
        for s in &m.skipped {
            log::warn!("image {}: instance {} not assigned: {}", m.image_id, s.instance_id, s.reason);
        }
    }
    Ok(maps)
}

/// Fuses predictions image by image; output is grouped by image id.
pub fn run_fuse(
    predictions: &[PredictionRecord],
    cfg: &FusionConfig,
    threads: usize,
) -> Result<Vec<DetectionRecord>, PipelineError> {
    let mut by_image: BTreeMap<u64, Vec<_>> = BTreeMap::new();
    for (i, rec) in predictions.iter().enumerate() {
        by_image.entry(rec.image_id).or_default().push(rec.to_prediction(i)?);
    }
    let groups: Vec<(u64, Vec<_>)> = by_image.into_iter().collect();
    let fused: Vec<Vec<DetectionRecord>> = with_pool(threads, || {
        groups
            .par_iter()
            .map(|(image_id, preds)| {
                fuse(preds, cfg)
                    .iter()
                    .map(|d| DetectionRecord::from_detection(*image_id, d))
                    .collect()
            })
            .collect()
    })?;
    Ok(fused.into_iter().flatten().collect())
}

pub fn ground_truth(manifest: &DatasetManifest) -> Vec<GroundTruth> {
    manifest
        .annotations
        .iter()
        .map(|a| GroundTruth { image_id: a.image_id, category_id: a.category_id, bbox: a.bbox })
        .collect()
}

pub fn run_eval(
    detections: &[DetectionRecord],
    manifest: &DatasetManifest,
    cfg: &EvalConfig,
) -> Result<ApReport, PipelineError> {
    let mut scored = Vec::with_capacity(detections.len());
    for (i, d) in detections.iter().enumerate() {
        if manifest.image(d.image_id).is_none() {
            return Err(PipelineError::DanglingReference {
                kind: "detections",
                index: i,
                field: "image_id",
                id: d.image_id,
            });
        }
        scored.push(d.to_scored(i)?);
    }
    Ok(evaluate_ap(&scored, &ground_truth(manifest), cfg)?)
}

/// Exact barrier map of a whole (small) image, written as a scaled PGM.
pub fn run_mbd_oracle(image: &Path, seed_step: usize, out: &Path) -> Result<BarrierMap, PipelineError> {
    let patch = load_image(image)?;
    let ctx = || image.display().to_string();
    let seeds = build_seeds(&patch, seed_step).map_err(mbd_error(ctx()))?;
    let map = exact_mbd(&patch, &seeds).map_err(mbd_error(ctx()))?;
    let values: Vec<f64> = map.values.iter().map(|&v| v as f64).collect();
    let mut buf = Vec::new();
    write_pgm16(&mut buf, map.width, map.height, &values).expect("writing to memory");
    std::fs::write(out, buf).map_err(|e| PipelineError::io(out, e))?;
    Ok(map)
}

/// Parses `lo:hi:step` or a comma-separated list of IoU thresholds.
pub fn parse_iou_range(text: &str) -> Result<Vec<f64>, PipelineError> {
    let bad = || PipelineError::InvalidArgument(format!("bad IoU thresholds \"{text}\""));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(step > 0.0) || hi < lo {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            // round off accumulated binary error so 0.6 stays 0.6
            (0..n).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    EvalConfig::new(values.clone()).map_err(|_| bad())?;
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_range() {
        let t = parse_iou_range("0.50:0.95:0.05").unwrap();
        assert_eq!(t, EvalConfig::default().iou_thresholds);
        assert_eq!(parse_iou_range("0.5,0.75").unwrap(), vec![0.5, 0.75]);
        assert!(parse_iou_range("0.5:0.4:0.05").is_err());
        assert!(parse_iou_range("x").is_err());
        assert!(parse_iou_range("0.5:1.5:0.5").is_err());
    }

    #[test]
    fn zero_threads_rejected() {
        assert!(run_fuse(&[], &FusionConfig::default(), 0).is_err());
        assert!(run_fuse(&[], &FusionConfig::default(), 1).unwrap().is_empty());
    }
}
