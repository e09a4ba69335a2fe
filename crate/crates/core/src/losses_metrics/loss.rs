use super::LossError;
use crate::geometry::{decode_box_at, giou, iou, Box2D, Offsets};
use crate::label_assignment::{CellLabel, LabelMap};
use serde::{Deserialize, Serialize};

/// Probability clamp for log stability.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_gamma: 2.0,
            focal_alpha: 0.25,
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `-alpha_t (1 - p_t)^gamma ln(p_t)`.
pub fn focal_loss(p: f64, target: bool, cfg: &LossConfig) -> f64 {
    let p = clamp_prob(p);
    let (pt, at) = if target {
        (p, cfg.focal_alpha)
    } else {
        (1.0 - p, 1.0 - cfg.focal_alpha)
    };
    -at * (1.0 - pt).powf(cfg.focal_gamma) * pt.ln()
}

/// Binary cross entropy against a soft target.
pub fn bce(p: f64, target: f64) -> f64 {
    let p = clamp_prob(p);
    -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
}

/// Confidence-head loss: BCE between the predicted and the actual IoU.
pub fn iou_bce(pred_conf: f64, target_iou: f64) -> f64 {
    bce(pred_conf, target_iou.clamp(0.0, 1.0))
}

pub fn giou_loss(pred: &Box2D, gt: &Box2D) -> Result<f64, LossError> {
    Ok(1.0 - giou(pred, gt)?)
}

/// Loss value and its gradient with respect to
/// `[pred.x_min, pred.y_min, pred.x_max, pred.y_max, gt.x_min, gt.y_min, gt.x_max, gt.y_max]`.
///
/// Piecewise smooth; at ties between coordinates feeding a min/max the
/// first box wins.
pub fn giou_loss_grad(pred: &Box2D, gt: &Box2D) -> Result<(f64, [f64; 8]), LossError> {
    let loss = giou_loss(pred, gt)?;
    let a = pred.to_array();
    let b = gt.to_array();

    // dimension 0 = x, 1 = y; coordinate indices lo = d, hi = d + 2
    let mut inter_len = [0.0; 2];
    let mut d_inter_len = [[0.0; 8]; 2];
    let mut hull_len = [0.0; 2];
    let mut d_hull_len = [[0.0; 8]; 2];
    for d in 0..2 {
        let (lo, hi) = (d, d + 2);
        let (max_lo, max_lo_idx) = if a[lo] >= b[lo] { (a[lo], lo) } else { (b[lo], lo + 4) };
        let (min_hi, min_hi_idx) = if a[hi] <= b[hi] { (a[hi], hi) } else { (b[hi], hi + 4) };
        if min_hi > max_lo {
            inter_len[d] = min_hi - max_lo;
            d_inter_len[d][min_hi_idx] = 1.0;
            d_inter_len[d][max_lo_idx] = -1.0;
        }
        let (min_lo, min_lo_idx) = if a[lo] <= b[lo] { (a[lo], lo) } else { (b[lo], lo + 4) };
        let (max_hi, max_hi_idx) = if a[hi] >= b[hi] { (a[hi], hi) } else { (b[hi], hi + 4) };
        hull_len[d] = max_hi - min_lo;
        d_hull_len[d][max_hi_idx] = 1.0;
        d_hull_len[d][min_lo_idx] = -1.0;
    }

    let (aw, ah) = (a[2] - a[0], a[3] - a[1]);
    let (bw, bh) = (b[2] - b[0], b[3] - b[1]);
    let mut d_area = [0.0; 8];
    d_area[0] = -ah;
    d_area[2] = ah;
    d_area[1] = -aw;
    d_area[3] = aw;
    d_area[4] = -bh;
    d_area[6] = bh;
    d_area[5] = -bw;
    d_area[7] = bw;

    let inter = inter_len[0] * inter_len[1];
    let union = aw * ah + bw * bh - inter;
    let hull = hull_len[0] * hull_len[1];

    // loss = 2 - I/U - U/C
    let mut grad = [0.0; 8];
    for k in 0..8 {
        let di = d_inter_len[0][k] * inter_len[1] + inter_len[0] * d_inter_len[1][k];
        let dc = d_hull_len[0][k] * hull_len[1] + hull_len[0] * d_hull_len[1][k];
        let du = d_area[k] - di;
        grad[k] = -(di * union - inter * du) / (union * union) - (du * hull - union * dc) / (hull * hull);
    }
    Ok((loss, grad))
}

/// Network output at one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutput {
    /// Per-class probabilities, indexed like the `classes` slice given to [`total_loss`].
    pub class_probs: Vec<f64>,
    /// Distances from the label's anchor point to the predicted box edges.
    pub offsets: Offsets,
    /// Predicted IoU.
    pub iou_conf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg: f64,
    pub iou: f64,
    pub total: f64,
    /// Sum of positive multiplicities (1 when there are none).
    pub normalizer: f64,
    pub no_positives: bool,
}

/// Unweighted sum of the classification, box and IoU terms over one image.
///
/// `outputs[l][i]` is the output at cell `i` of `labels.levels[l]`.
/// Classification covers positive and negative cells; ignore cells
/// contribute nothing. Positives count `multiplicity` times everywhere.
pub fn total_loss(
    outputs: &[Vec<CellOutput>],
    labels: &LabelMap,
    classes: &[u64],
    cfg: &LossConfig,
) -> Result<LossBreakdown, LossError> {
    if outputs.len() != labels.levels.len() {
        return Err(LossError::Misaligned(format!(
            "{} output levels for {} label levels",
            outputs.len(),
            labels.levels.len()
        )));
    }
    let (mut cls, mut reg, mut iou_term, mut norm) = (0.0, 0.0, 0.0, 0.0);
    for (level, outs) in labels.levels.iter().zip(outputs) {
        if outs.len() != level.labels.len() {
            return Err(LossError::Misaligned(format!(
                "level {}: {} outputs for {} cells",
                level.grid.level,
                outs.len(),
                level.labels.len()
            )));
        }
        for (label, out) in level.labels.iter().zip(outs) {
            if out.class_probs.len() != classes.len() {
                return Err(LossError::Misaligned(format!(
                    "{} class probabilities for {} classes",
                    out.class_probs.len(),
                    classes.len()
                )));
            }
            match label {
                CellLabel::Ignore => {}
                CellLabel::Negative => {
                    cls += out.class_probs.iter().map(|&p| focal_loss(p, false, cfg)).sum::<f64>();
                }
                CellLabel::Positive(pos) => {
                    let w = pos.multiplicity as f64;
                    let target = classes
                        .iter()
                        .position(|&c| c == pos.category_id)
                        .ok_or(LossError::UnknownCategory(pos.category_id))?;
                    let c: f64 = out
                        .class_probs
                        .iter()
                        .enumerate()
                        .map(|(k, &p)| focal_loss(p, k == target, cfg))
                        .sum();
                    let pred = decode_box_at(pos.anchor, out.offsets)?;
                    let gt = decode_box_at(pos.anchor, pos.targets)?;
                    let actual_iou = iou(&pred, &gt).unwrap_or(0.0);
                    cls += w * c;
                    reg += w * giou_loss(&pred, &gt)?;
                    iou_term += w * iou_bce(out.iou_conf, actual_iou);
                    norm += w;
                }
            }
        }
    }
    let no_positives = norm == 0.0;
    let normalizer = if no_positives { 1.0 } else { norm };
    let (cls, reg, iou) = (cls / normalizer, reg / normalizer, iou_term / normalizer);
    Ok(LossBreakdown {
        cls,
        reg,
        iou,
        total: cls + reg + iou,
        normalizer,
        no_positives,
    })
}
