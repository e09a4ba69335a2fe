//! Per-cell training labels from visibility grids.
//!
//! Every instance is placed on one pyramid level by size. Candidate cells
//! (visibility above the threshold) are sampled in proportion to their score
//! until the instance holds `k` positives; unsampled candidates become
//! ignore cells and everything else is negative.

use crate::barrier_distance::{visibility_distance_map, ImagePatch, MbdConfig, MbdError};
use crate::geometry::{encode_box_at, Box2D, CellId, GeometryError, GridSpec, Offsets};
use crate::visibility_grid::{
    candidates, normalize_scores, pool_to_grid, VisibilityError, VisibilityGrid,
    VisibilityThreshold,
};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Pyramid level of the finest stride.
pub const BASE_LEVEL: u8 = 3;
/// Object side length mapped to the base level.
pub const BASE_SIZE: f64 = 64.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("instance {instance_id} covers no usable grid cell on level {level}")]
    Unassignable { instance_id: u64, level: u8 },
    #[error("invalid sampling config: {0}")]
    InvalidConfig(String),
    #[error("visibility grid of instance {instance_id} is on level {level}, which this image does not have")]
    UnknownLevel { instance_id: u64, level: u8 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Visibility(#[from] VisibilityError),
    #[error(transparent)]
    Mbd(#[from] MbdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub instance_id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: Box2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub k: usize,
    pub threshold: VisibilityThreshold,
    pub rng_seed: u64,
    pub strides: Vec<u32>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            k: 10,
            threshold: VisibilityThreshold::default(),
            rng_seed: 0,
            strides: vec![8, 16, 32, 64, 128],
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), AssignError> {
        if self.k == 0 {
            return Err(AssignError::InvalidConfig("k must be >= 1".into()));
        }
        if self.strides.is_empty() || self.strides[0] == 0 {
            return Err(AssignError::InvalidConfig("strides must be non-empty and positive".into()));
        }
        if self.strides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AssignError::InvalidConfig("strides must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn stride_of(&self, level: u8) -> u32 {
        self.strides[(level - BASE_LEVEL) as usize]
    }

    /// One grid per stride covering an image of the given size.
    pub fn image_grids(&self, width: usize, height: usize) -> Result<Vec<GridSpec>, AssignError> {
        self.strides
            .iter()
            .enumerate()
            .map(|(i, &s)| Ok(GridSpec::for_image(width, height, s, BASE_LEVEL + i as u8)?))
            .collect()
    }
}

/// `clamp(floor(3 + log2(sqrt(w * h) / 64)), 3, 3 + levels - 1)`.
pub fn assign_level(bbox: &Box2D, num_levels: usize) -> u8 {
    let size = bbox.area().sqrt();
    let raw = (BASE_LEVEL as f64 + (size / BASE_SIZE).log2()).floor();
    let top = BASE_LEVEL as f64 + num_levels.saturating_sub(1) as f64;
    // a zero-area box gives -inf and lands on the finest level
    raw.clamp(BASE_LEVEL as f64, top) as u8
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one instance, so results do not depend on processing order.
pub fn instance_rng(seed: u64, image_id: u64, instance_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(splitmix64(splitmix64(image_id) ^ instance_id));
    rng
}

/// Sampled positives of one instance; multiplicities sum to `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositiveSample {
    pub cells: Vec<(CellId, u32)>,
    pub fallback: bool,
}

impl PositiveSample {
    pub fn total(&self) -> u32 {
        self.cells.iter().map(|(_, m)| m).sum()
    }
}

fn tally(draws: impl IntoIterator<Item = CellId>) -> Vec<(CellId, u32)> {
    let mut counts: BTreeMap<CellId, u32> = BTreeMap::new();
    for c in draws {
        *counts.entry(c).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Draws `k` positives from `candidates` with probability proportional to their score.
///
/// With at least `k` candidates the draw is without replacement. With fewer,
/// every candidate is taken once and the remainder is drawn with replacement.
/// With none, `fallback` receives all `k`.
pub fn sample_positives<R: Rng + ?Sized>(
    candidates: &[(CellId, f32)],
    fallback: Option<CellId>,
    k: usize,
    rng: &mut R,
) -> Option<PositiveSample> {
    let k32 = k as u32;
    if candidates.is_empty() {
        return fallback.map(|cell| PositiveSample {
            cells: vec![(cell, k32)],
            fallback: true,
        });
    }
    let weights: Vec<f64> = candidates.iter().map(|(_, v)| *v as f64).collect();
    let mut dist = WeightedIndex::new(&weights).ok()?;
    let mut draws = Vec::with_capacity(k);
    if candidates.len() >= k {
        for i in 0..k {
            let idx = dist.sample(rng);
            draws.push(candidates[idx].0);
            if i + 1 < k {
                dist.update_weights(&[(idx, &0.0)]).ok()?;
            }
        }
    } else {
        draws.extend(candidates.iter().map(|(c, _)| *c));
        for _ in candidates.len()..k {
            draws.push(candidates[dist.sample(rng)].0);
        }
    }
    Some(PositiveSample {
        cells: tally(draws),
        fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveLabel {
    pub instance_id: u64,
    pub category_id: u64,
    pub multiplicity: u32,
    /// Point the regression targets are measured from: the cell centre, clamped into the box.
    pub anchor: (f64, f64),
    pub targets: Offsets,
    /// Set when the instance had no candidate cell and took its best covered cell instead.
    pub fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellLabel {
    Negative,
    Ignore,
    Positive(PositiveLabel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLabels {
    pub grid: GridSpec,
    pub labels: Vec<CellLabel>,
}

impl LevelLabels {
    pub fn new(grid: GridSpec) -> Self {
        Self {
            grid,
            labels: vec![CellLabel::Negative; grid.num_cells()],
        }
    }

    pub fn get(&self, cell: &CellId) -> &CellLabel {
        &self.labels[self.grid.index(cell.row, cell.col)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedInstance {
    pub instance_id: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    pub image_id: u64,
    pub levels: Vec<LevelLabels>,
    pub skipped: Vec<SkippedInstance>,
}

impl LabelMap {
    pub fn level(&self, level: u8) -> Option<&LevelLabels> {
        self.levels.iter().find(|l| l.grid.level == level)
    }

    fn level_mut(&mut self, level: u8) -> Option<&mut LevelLabels> {
        self.levels.iter_mut().find(|l| l.grid.level == level)
    }

    pub fn label(&self, cell: &CellId) -> Option<&CellLabel> {
        self.level(cell.level).map(|l| l.get(cell))
    }

    /// Every positive cell with its label, level by level in row-major order.
    pub fn positives(&self) -> impl Iterator<Item = (CellId, &PositiveLabel)> + '_ {
        self.levels.iter().flat_map(|lvl| {
            lvl.labels.iter().enumerate().filter_map(move |(i, l)| match l {
                CellLabel::Positive(p) => Some((lvl.grid.cell_at_index(i), p)),
                _ => None,
            })
        })
    }

    pub fn ignores(&self) -> impl Iterator<Item = CellId> + '_ {
        self.levels.iter().flat_map(|lvl| {
            lvl.labels
                .iter()
                .enumerate()
                .filter(|(_, l)| matches!(l, CellLabel::Ignore))
                .map(move |(i, _)| lvl.grid.cell_at_index(i))
        })
    }

    /// Total positive multiplicity per instance.
    pub fn multiplicities(&self) -> BTreeMap<u64, u32> {
        let mut out = BTreeMap::new();
        for (_, p) in self.positives() {
            *out.entry(p.instance_id).or_default() += p.multiplicity;
        }
        out
    }
}

/// One annotation with its visibility grid on its assigned level.
#[derive(Debug, Clone)]
pub struct InstanceVisibility {
    pub annotation: InstanceAnnotation,
    pub visibility: VisibilityGrid,
}

fn positive_label(
    ann: &InstanceAnnotation,
    grid: &GridSpec,
    cell: CellId,
    multiplicity: u32,
    fallback: bool,
) -> PositiveLabel {
    let (cx, cy) = grid.cell_center(&cell);
    let b = &ann.bbox;
    let anchor = (cx.clamp(b.x_min, b.x_max), cy.clamp(b.y_min, b.y_max));
    PositiveLabel {
        instance_id: ann.instance_id,
        category_id: ann.category_id,
        multiplicity,
        anchor,
        targets: encode_box_at(anchor, b),
        fallback,
    }
}

/// Builds the label map of one image.
///
/// A cell that is a candidate for several instances can only become a
/// positive of the instance with the highest score there (smaller box area,
/// then lower instance id, on ties); the others drop it before sampling.
/// Instances are processed in instance-id order. Instances that cannot be
/// assigned are listed in `skipped`.
pub fn build_label_map(
    image_id: u64,
    level_grids: &[GridSpec],
    instances: &[InstanceVisibility],
    cfg: &SamplingConfig,
) -> Result<LabelMap, AssignError> {
    cfg.validate()?;
    let mut map = LabelMap {
        image_id,
        levels: level_grids.iter().copied().map(LevelLabels::new).collect(),
        skipped: Vec::new(),
    };

    let mut order: Vec<&InstanceVisibility> = instances.iter().collect();
    order.sort_by_key(|iv| iv.annotation.instance_id);
    for iv in &order {
        let level = iv.visibility.grid.level;
        if map.level(level).map(|l| l.grid) != Some(iv.visibility.grid) {
            return Err(AssignError::UnknownLevel {
                instance_id: iv.annotation.instance_id,
                level,
            });
        }
    }

    let cands: Vec<Vec<CellId>> = order
        .iter()
        .map(|iv| candidates(&iv.visibility, cfg.threshold))
        .collect();

    // contested cells go to the strongest claim
    let mut owner: BTreeMap<CellId, usize> = BTreeMap::new();
    for (i, cs) in cands.iter().enumerate() {
        for &c in cs {
            owner
                .entry(c)
                .and_modify(|j| {
                    let (a, b) = (&order[i], &order[*j]);
                    let (va, vb) = (a.visibility.score(&c), b.visibility.score(&c));
                    let wins = va > vb
                        || (va == vb && a.annotation.bbox.area() < b.annotation.bbox.area());
                    if wins {
                        *j = i;
                    }
                })
                .or_insert(i);
        }
    }

    let mut taken: BTreeSet<CellId> = BTreeSet::new();
    for (i, iv) in order.iter().enumerate() {
        let ann = &iv.annotation;
        let vis = &iv.visibility;
        let eligible: Vec<(CellId, f32)> = cands[i]
            .iter()
            .filter(|c| owner.get(c) == Some(&i))
            .map(|c| (*c, vis.score(c)))
            .collect();
        let fallback = if eligible.is_empty() {
            let mut best: Option<(CellId, f32)> = None;
            for (c, v) in vis.covered_cells() {
                if owner.contains_key(&c) || taken.contains(&c) {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((c, v));
                }
            }
            best.map(|(c, _)| c)
        } else {
            None
        };

        let mut rng = instance_rng(cfg.rng_seed, image_id, ann.instance_id);
        let Some(sample) = sample_positives(&eligible, fallback, cfg.k, &mut rng) else {
            map.skipped.push(SkippedInstance {
                instance_id: ann.instance_id,
                reason: AssignError::Unassignable {
                    instance_id: ann.instance_id,
                    level: vis.grid.level,
                }
                .to_string(),
            });
            continue;
        };
        let level = map.level_mut(vis.grid.level).expect("checked above");
        for (cell, m) in sample.cells {
            taken.insert(cell);
            let idx = level.grid.index(cell.row, cell.col);
            level.labels[idx] =
                CellLabel::Positive(positive_label(ann, &vis.grid, cell, m, sample.fallback));
        }
    }

    for cell in owner.keys() {
        if taken.contains(cell) {
            continue;
        }
        let level = map.level_mut(cell.level).expect("checked above");
        let idx = level.grid.index(cell.row, cell.col);
        level.labels[idx] = CellLabel::Ignore;
    }
    Ok(map)
}

/// Crops the instance box, runs the visibility transform and pools it onto the assigned level.
pub fn instance_visibility(
    image: &ImagePatch,
    ann: &InstanceAnnotation,
    level_grids: &[GridSpec],
    mbd: &MbdConfig,
) -> Result<InstanceVisibility, AssignError> {
    let level = assign_level(&ann.bbox, level_grids.len());
    let grid = level_grids
        .iter()
        .find(|g| g.level == level)
        .ok_or(AssignError::UnknownLevel {
            instance_id: ann.instance_id,
            level,
        })?;
    let patch = image.crop(ann.bbox.pixel_span())?;
    let dist = visibility_distance_map(&patch, mbd)?;
    let means = pool_to_grid(&dist, &ann.bbox, grid)?;
    let visibility = normalize_scores(&means, ann.instance_id)?;
    Ok(InstanceVisibility {
        annotation: *ann,
        visibility,
    })
}

/// Full assignment for one image. Instances whose visibility cannot be
/// computed are reported in `skipped` rather than failing the image.
pub fn assign_image(
    image: &ImagePatch,
    image_id: u64,
    annotations: &[InstanceAnnotation],
    cfg: &SamplingConfig,
    mbd: &MbdConfig,
) -> Result<LabelMap, AssignError> {
    cfg.validate()?;
    mbd.validate()?;
    let grids = cfg.image_grids(image.width(), image.height())?;
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for ann in annotations {
        match instance_visibility(image, ann, &grids, mbd) {
            Ok(iv) => instances.push(iv),
            Err(e) => skipped.push(SkippedInstance {
                instance_id: ann.instance_id,
                reason: e.to_string(),
            }),
        }
    }
    let mut map = build_label_map(image_id, &grids, &instances, cfg)?;
    map.skipped.extend(skipped);
    map.skipped.sort_by_key(|s| s.instance_id);
    Ok(map)
}

/// Centre-sampling baseline: every cell of the level whose centre lies
/// inside the box and within `radius * stride` of the box centre.
pub fn center_sampling_positives(bbox: &Box2D, grid: &GridSpec, radius: f64) -> Vec<CellId> {
    let (bx, by) = bbox.center();
    let r = radius * grid.stride as f64;
    let mut out = Vec::new();
    for row in 0..grid.height {
        for col in 0..grid.width {
            let cell = grid.cell(row, col);
            let (cx, cy) = grid.cell_center(&cell);
            if bbox.contains_point(cx, cy) && (cx - bx).abs() <= r && (cy - by).abs() <= r {
                out.push(cell);
            }
        }
    }
    if out.is_empty() {
        // box centre's own cell, so tiny boxes still get one sample
        let s = grid.stride as f64;
        let row = ((by / s) as usize).min(grid.height - 1);
        let col = ((bx / s) as usize).min(grid.width - 1);
        out.push(grid.cell(row, col));
    }
    out
}
