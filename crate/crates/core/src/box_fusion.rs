//! Inference-time fusion: clusters overlapping predictions around their
//! local maximum, NMS-style, and replaces each cluster by the
//! confidence-weighted mean of its members instead of suppressing them.

use crate::geometry::{iou, Box2D, CellId};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub bbox: Box2D,
    pub category_id: u64,
    pub cls_score: f64,
    /// Predicted IoU with the ground truth.
    pub confidence: f64,
    pub cell: Option<CellId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// `sqrt(cls_score * confidence)` of the cluster seed.
    #[default]
    Geomean,
    /// `cls_score` of the cluster seed.
    Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub score_threshold: f64,
    pub cluster_iou: f64,
    pub score_mode: ScoreMode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            score_threshold: 0.05,
            cluster_iou: 0.6,
            score_mode: ScoreMode::Geomean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: Box2D,
    pub category_id: u64,
    pub score: f64,
    pub cluster_size: usize,
}

/// Members of one cluster; `members[0]` is the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub members: Vec<Prediction>,
}

impl Cluster {
    pub fn seed(&self) -> &Prediction {
        &self.members[0]
    }
}

/// Descending score; equal scores fall back to box coordinates, then confidence.
fn rank(a: &Prediction, b: &Prediction) -> Ordering {
    b.cls_score
        .total_cmp(&a.cls_score)
        .then_with(|| a.bbox.lex_cmp(&b.bbox))
        .then_with(|| b.confidence.total_cmp(&a.confidence))
}

fn overlap(a: &Box2D, b: &Box2D) -> f64 {
    // two zero-area boxes only overlap when they coincide
    iou(a, b).unwrap_or(if a == b { 1.0 } else { 0.0 })
}

/// Predictions with `cls_score` strictly above the threshold, in input order.
pub fn filter_predictions(preds: &[Prediction], score_threshold: f64) -> Vec<Prediction> {
    preds
        .iter()
        .filter(|p| p.cls_score > score_threshold)
        .copied()
        .collect()
}

/// Greedy per-category clustering: the best unclustered prediction seeds a
/// cluster and absorbs every unclustered prediction with IoU >= `cluster_iou`
/// against it. Clusters come out ordered by category, then seed rank.
pub fn cluster_predictions(preds: &[Prediction], cluster_iou: f64) -> Vec<Cluster> {
    let mut by_cat: BTreeMap<u64, Vec<Prediction>> = BTreeMap::new();
    for p in preds {
        by_cat.entry(p.category_id).or_default().push(*p);
    }
    let mut clusters = Vec::new();
    for (_, mut group) in by_cat {
        group.sort_by(rank);
        let mut used = vec![false; group.len()];
        for i in 0..group.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let seed = group[i];
            let mut members = vec![seed];
            for j in i + 1..group.len() {
                if !used[j] && overlap(&seed.bbox, &group[j].bbox) >= cluster_iou {
                    used[j] = true;
                    members.push(group[j]);
                }
            }
            clusters.push(Cluster { members });
        }
    }
    clusters
}

/// Confidence-weighted mean box of the cluster, scored from its seed.
pub fn fuse_cluster(cluster: &Cluster, score_mode: ScoreMode) -> Detection {
    let seed = cluster.seed();
    let total: f64 = cluster.members.iter().map(|m| m.confidence).sum();
    let mut weighted = cluster.members.iter().filter(|m| m.confidence > 0.0);
    let sole = match (weighted.next(), weighted.next()) {
        (Some(only), None) => Some(only.bbox),
        _ => None,
    };
    let bbox = if let Some(b) = sole {
        b
    } else if total > 0.0 {
        let mut acc = [0.0f64; 4];
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for m in &cluster.members {
            for (k, v) in m.bbox.to_array().into_iter().enumerate() {
                acc[k] += m.confidence * v;
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        // rounding must not push a coordinate outside the members' envelope
        let c: Vec<f64> = (0..4).map(|k| (acc[k] / total).clamp(lo[k], hi[k])).collect();
        Box2D {
            x_min: c[0],
            y_min: c[1],
            x_max: c[2].max(c[0]),
            y_max: c[3].max(c[1]),
        }
    } else {
        seed.bbox
    };
    let score = match score_mode {
        ScoreMode::Geomean => (seed.cls_score * seed.confidence).sqrt(),
        ScoreMode::Seed => seed.cls_score,
    };
    Detection {
        bbox,
        category_id: seed.category_id,
        score,
        cluster_size: cluster.members.len(),
    }
}

/// Filter, cluster and fuse.
///
/// Fused boxes of one category can end up overlapping by more than
/// `cluster_iou` even though their seeds did not; such clusters are merged
/// (keeping the higher-ranked seed) and refused until no pair remains, so
/// fusing the output again leaves it unchanged. Sorted by descending score.
pub fn fuse(preds: &[Prediction], cfg: &FusionConfig) -> Vec<Detection> {
    fuse_with_clusters(preds, cfg).into_iter().map(|(d, _)| d).collect()
}

/// [`fuse`], also returning the final members behind each detection.
pub fn fuse_with_clusters(preds: &[Prediction], cfg: &FusionConfig) -> Vec<(Detection, Cluster)> {
    let kept = filter_predictions(preds, cfg.score_threshold);
    let mut clusters = cluster_predictions(&kept, cfg.cluster_iou);
    let mut fused: Vec<Detection> = clusters
        .iter()
        .map(|c| fuse_cluster(c, cfg.score_mode))
        .collect();

    'merge: loop {
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let same_cat = fused[i].category_id == fused[j].category_id;
                if same_cat && overlap(&fused[i].bbox, &fused[j].bbox) >= cfg.cluster_iou {
                    let (keep, drop) = if rank(clusters[i].seed(), clusters[j].seed()).is_le() {
                        (i, j)
                    } else {
                        (j, i)
                    };
                    let moved = std::mem::take(&mut clusters[drop].members);
                    clusters[keep].members.extend(moved);
                    let seed = clusters[keep].members[0];
                    clusters[keep].members[1..].sort_by(rank);
                    debug_assert_eq!(seed, clusters[keep].members[0]);
                    fused[keep] = fuse_cluster(&clusters[keep], cfg.score_mode);
                    clusters.remove(drop);
                    fused.remove(drop);
                    continue 'merge;
                }
            }
        }
        break;
    }

    let mut out: Vec<(Detection, Cluster)> = fused.into_iter().zip(clusters).collect();
    out.sort_by(|(a, _), (b, _)| {
        b.score
            .total_cmp(&a.score)
            .then(a.category_id.cmp(&b.category_id))
            .then_with(|| a.bbox.lex_cmp(&b.bbox))
    });
    out
}

/// Classical greedy NMS over the filtered predictions, per category.
pub fn nms(preds: &[Prediction], score_threshold: f64, iou_threshold: f64) -> Vec<Prediction> {
    let mut kept: Vec<Prediction> = Vec::new();
    let mut sorted = filter_predictions(preds, score_threshold);
    sorted.sort_by(rank);
    for p in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.category_id == p.category_id && overlap(&k.bbox, &p.bbox) >= iou_threshold);
        if !suppressed {
            kept.push(p);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(b: [f64; 4], cat: u64, score: f64, conf: f64) -> Prediction {
        Prediction {
            bbox: Box2D::new(b[0], b[1], b[2], b[3]).unwrap(),
            category_id: cat,
            cls_score: score,
            confidence: conf,
            cell: None,
        }
    }

    #[test]
    fn filter_is_strict() {
        let p = [
            pred([0., 0., 1., 1.], 1, 0.04, 1.),
            pred([0., 0., 1., 1.], 1, 0.05, 1.),
            pred([0., 0., 1., 1.], 1, 0.06, 1.),
        ];
        let kept = filter_predictions(&p, 0.05);
        assert_eq!(kept, vec![p[2]]);
        assert_eq!(filter_predictions(&[pred([0., 0., 1., 1.], 1, 0.9, 1.)], 0.05).len(), 1);
        assert!(filter_predictions(&[pred([0., 0., 1., 1.], 1, 0.01, 1.)], 0.05).is_empty());
    }

    #[test]
    fn clustering_examples() {
        assert_eq!(cluster_predictions(&[pred([0., 0., 1., 1.], 1, 0.9, 1.)], 0.6).len(), 1);
        let disjoint = [pred([0., 0., 1., 1.], 1, 0.9, 1.), pred([5., 5., 6., 6.], 1, 0.8, 1.)];
        assert_eq!(cluster_predictions(&disjoint, 0.6).len(), 2);

        // seed [0,0,10,10]; b = [0,0,10,7] has IoU 0.7; c = [8,0,18,10] has IoU 2/18
        let seed = pred([0., 0., 10., 10.], 1, 0.9, 1.);
        let b = pred([0., 0., 10., 7.], 1, 0.8, 1.);
        let c = pred([8., 0., 18., 10.], 1, 0.7, 1.);
        assert!((iou(&seed.bbox, &b.bbox).unwrap() - 0.7).abs() < 1e-12);
        let clusters = cluster_predictions(&[c, b, seed], 0.6);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members, vec![seed, b]);
        assert_eq!(clusters[1].members, vec![c]);
    }

    #[test]
    fn categories_never_merge() {
        let p = [pred([0., 0., 1., 1.], 1, 0.9, 1.), pred([0., 0., 1., 1.], 2, 0.9, 1.)];
        let d = fuse(&p, &FusionConfig::default());
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|d| d.cluster_size == 1 && d.bbox == p[0].bbox));
    }

    #[test]
    fn fuse_cluster_examples() {
        let single = Cluster { members: vec![pred([1., 2., 3., 4.], 1, 0.8, 0.5)] };
        let d = fuse_cluster(&single, ScoreMode::Geomean);
        assert_eq!(d.bbox, single.members[0].bbox);
        assert!((d.score - 0.4f64.sqrt()).abs() < 1e-15);

        let same = Cluster {
            members: vec![pred([0.1, 0.2, 3.3, 4.7], 1, 0.8, 0.37), pred([0.1, 0.2, 3.3, 4.7], 1, 0.7, 0.91)],
        };
        assert_eq!(fuse_cluster(&same, ScoreMode::Seed).bbox, same.members[0].bbox);

        let two = Cluster {
            members: vec![pred([0., 0., 2., 2.], 1, 0.9, 1.), pred([0., 0., 4., 4.], 1, 0.8, 1.)],
        };
        assert_eq!(fuse_cluster(&two, ScoreMode::Seed).bbox, Box2D::new(0., 0., 3., 3.).unwrap());
        assert_eq!(fuse_cluster(&two, ScoreMode::Seed).score, 0.9);

        let zero = Cluster {
            members: vec![pred([0., 0., 2., 2.], 1, 0.9, 0.), pred([0., 0., 4., 4.], 1, 0.8, 0.)],
        };
        assert_eq!(fuse_cluster(&zero, ScoreMode::Seed).bbox, zero.members[0].bbox);
    }

    #[test]
    fn fuse_pipeline() {
        assert!(fuse(&[], &FusionConfig::default()).is_empty());

        let bundle = [
            pred([10., 10., 50., 50.], 3, 0.9, 0.9),
            pred([11., 9., 51., 49.], 3, 0.8, 0.8),
            pred([9., 11., 49., 52.], 3, 0.85, 0.7),
            pred([10., 12., 50., 50.], 3, 0.7, 0.95),
            pred([12., 10., 52., 51.], 3, 0.6, 0.6),
            pred([30., 30., 90., 90.], 3, 0.03, 0.9),
        ];
        let d = fuse(&bundle, &FusionConfig::default());
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].cluster_size, 5);
        let b = d[0].bbox;
        assert!((9. ..=12.).contains(&b.x_min) && (9. ..=12.).contains(&b.y_min));
        assert!((49. ..=52.).contains(&b.x_max) && (49. ..=52.).contains(&b.y_max));
    }

    #[test]
    fn fused_neighbours_are_merged() {
        // a absorbs b but not c; the fused box of {a, b} then overlaps c
        let a = pred([0., 0., 10., 10.], 1, 0.9, 1.0);
        let b = pred([3., 0., 13., 10.], 1, 0.8, 1.0);
        let c = pred([4., 0., 14., 10.], 1, 0.7, 1.0);
        assert!(iou(&a.bbox, &b.bbox).unwrap() >= 0.5);
        assert!(iou(&a.bbox, &c.bbox).unwrap() < 0.5);
        let cfg = FusionConfig { cluster_iou: 0.5, score_mode: ScoreMode::Seed, ..Default::default() };
        let d = fuse(&[a, b, c], &cfg);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].cluster_size, 3);
        assert_eq!(d[0].score, 0.9);
    }

    #[test]
    fn nms_keeps_seeds() {
        let p = [
            pred([0., 0., 10., 10.], 1, 0.9, 1.),
            pred([0., 0., 10., 8.], 1, 0.8, 1.),
            pred([20., 20., 30., 30.], 1, 0.7, 1.),
        ];
        assert_eq!(nms(&p, 0.05, 0.6), vec![p[0], p[2]]);
    }
}
