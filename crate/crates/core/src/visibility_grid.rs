//! Per-cell visibility scores: mean distance over the pixels a cell shares
//! with the instance box, max-normalized over the covered cells of one level.

use crate::barrier_distance::DistanceMap;
use crate::geometry::{Box2D, CellId, GeometryError, GridSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("distance map is {map_w}x{map_h} but the box crop is {crop_w}x{crop_h}")]
    CropMismatch {
        map_w: usize,
        map_h: usize,
        crop_w: usize,
        crop_h: usize,
    },
    #[error("no grid cell overlaps the box")]
    NoCoveredCells,
    #[error("every covered cell has zero mean distance")]
    NoVisibleRegion,
    #[error("threshold {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
}

/// Mean distance for every cell that overlaps the box, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    pub grid: GridSpec,
    pub cells: Vec<(CellId, f64)>,
}

/// Averages `dist` (the crop of `bbox`, see [`Box2D::pixel_span`]) over each
/// cell of `grid`, using only the crop pixels that fall inside the cell.
pub fn pool_to_grid(
    dist: &DistanceMap,
    bbox: &Box2D,
    grid: &GridSpec,
) -> Result<CellMeans, VisibilityError> {
    let span = bbox.pixel_span();
    let (extent_w, extent_h) = grid.extent();
    if bbox.x_min < 0.0 || bbox.y_min < 0.0 || span.x1 > extent_w || span.y1 > extent_h {
        return Err(GeometryError::OutsideGrid {
            x_min: bbox.x_min,
            y_min: bbox.y_min,
            x_max: bbox.x_max,
            y_max: bbox.y_max,
            extent_w,
            extent_h,
        }
        .into());
    }
    if dist.width != span.width() || dist.height != span.height() {
        return Err(VisibilityError::CropMismatch {
            map_w: dist.width,
            map_h: dist.height,
            crop_w: span.width(),
            crop_h: span.height(),
        });
    }
    if span.width() == 0 || span.height() == 0 {
        return Err(VisibilityError::NoCoveredCells);
    }

    let s = grid.stride as usize;
    let (c0, c1) = (span.x0 / s, (span.x1 - 1) / s);
    let (r0, r1) = (span.y0 / s, (span.y1 - 1) / s);
    let mut cells = Vec::with_capacity((c1 - c0 + 1) * (r1 - r0 + 1));
    for row in r0..=r1 {
        let ys = (row * s).max(span.y0)..((row + 1) * s).min(span.y1);
        for col in c0..=c1 {
            let xs = (col * s).max(span.x0)..((col + 1) * s).min(span.x1);
            let mut sum = 0.0;
            for y in ys.clone() {
                let base = (y - span.y0) * dist.width;
                for x in xs.clone() {
                    sum += dist.values[base + x - span.x0];
                }
            }
            let count = ys.len() * xs.len();
            cells.push((grid.cell(row, col), sum / count as f64));
        }
    }
    Ok(CellMeans { grid: *grid, cells })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityThreshold(f64);

impl VisibilityThreshold {
    pub fn new(value: f64) -> Result<Self, VisibilityError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(VisibilityError::InvalidThreshold(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for VisibilityThreshold {
    fn default() -> Self {
        Self(0.25)
    }
}

/// Scores of one instance on its pyramid level.
///
/// Scores are stored in single precision, which keeps them identical when
/// every mean distance is rescaled by the same factor.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGrid {
    pub grid: GridSpec,
    pub instance_id: u64,
    pub scores: Vec<f32>,
    pub mean_distances: Vec<f64>,
    pub covered: Vec<bool>,
}

impl VisibilityGrid {
    pub fn score(&self, cell: &CellId) -> f32 {
        self.scores[self.grid.index(cell.row, cell.col)]
    }

    pub fn is_covered(&self, cell: &CellId) -> bool {
        self.grid.contains(cell) && self.covered[self.grid.index(cell.row, cell.col)]
    }

    /// Covered cells with their scores, row-major.
    pub fn covered_cells(&self) -> impl Iterator<Item = (CellId, f32)> + '_ {
        self.covered
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| (self.grid.cell_at_index(i), self.scores[i]))
    }

    /// Covered cell with the highest score; row-major order breaks ties.
    pub fn best_cell(&self) -> Option<CellId> {
        let mut best: Option<(CellId, f32)> = None;
        for (cell, v) in self.covered_cells() {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((cell, v));
            }
        }
        best.map(|(c, _)| c)
    }
}

pub fn normalize_scores(means: &CellMeans, instance_id: u64) -> Result<VisibilityGrid, VisibilityError> {
    if means.cells.is_empty() {
        return Err(VisibilityError::NoCoveredCells);
    }
    let max = means.cells.iter().map(|(_, m)| *m).fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Err(VisibilityError::NoVisibleRegion);
    }
    let n = means.grid.num_cells();
    let mut scores = vec![0.0f32; n];
    let mut mean_distances = vec![0.0f64; n];
    let mut covered = vec![false; n];
    for (cell, m) in &means.cells {
        let i = means.grid.index(cell.row, cell.col);
        scores[i] = (m / max) as f32;
        mean_distances[i] = *m;
        covered[i] = true;
    }
    Ok(VisibilityGrid {
        grid: means.grid,
        instance_id,
        scores,
        mean_distances,
        covered,
    })
}

/// Covered cells with score strictly above the threshold, row-major.
pub fn candidates(vis: &VisibilityGrid, thr: VisibilityThreshold) -> Vec<CellId> {
    vis.covered_cells()
        .filter(|(_, v)| *v as f64 > thr.value())
        .map(|(c, _)| c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn means(grid: GridSpec, vals: &[f64]) -> CellMeans {
        CellMeans {
            grid,
            cells: vals.iter().enumerate().map(|(i, &v)| (grid.cell(0, i), v)).collect(),
        }
    }

    #[test]
    fn uniform_field_pools_to_constant() {
        let grid = GridSpec::new(8, 6, 6, 3).unwrap();
        let b = Box2D::new(3.0, 5.0, 30.0, 21.0).unwrap();
        let span = b.pixel_span();
        let dist =
            DistanceMap::from_values(span.width(), span.height(), vec![5.0; span.width() * span.height()]).unwrap();
        let m = pool_to_grid(&dist, &b, &grid).unwrap();
        assert_eq!(m.cells.len(), 4 * 3);
        assert!(m.cells.iter().all(|(_, v)| *v == 5.0));
    }

    #[test]
    fn row_index_field() {
        let grid = GridSpec::new(8, 4, 4, 3).unwrap();
        let b = Box2D::new(0.0, 0.0, 16.0, 16.0).unwrap();
        let vals = (0..16).flat_map(|y| std::iter::repeat_n(y as f64, 16)).collect();
        let dist = DistanceMap::from_values(16, 16, vals).unwrap();
        let m = pool_to_grid(&dist, &b, &grid).unwrap();
        assert_eq!(m.cells.len(), 4);
        for (cell, v) in m.cells {
            assert_eq!(v, if cell.row == 0 { 3.5 } else { 11.5 });
        }
    }

    #[test]
    fn partial_cell_uses_only_inside_pixels() {
        // box covers columns 4..12: cell 0 sees x = 4..8, cell 1 sees x = 8..12
        let grid = GridSpec::new(8, 2, 1, 3).unwrap();
        let b = Box2D::new(4.0, 0.0, 12.0, 8.0).unwrap();
        let vals = (0..8).flat_map(|_| (4..12).map(|x| x as f64)).collect();
        let dist = DistanceMap::from_values(8, 8, vals).unwrap();
        let m = pool_to_grid(&dist, &b, &grid).unwrap();
        assert_eq!(m.cells[0].1, 5.5);
        assert_eq!(m.cells[1].1, 9.5);
    }

    #[test]
    fn box_outside_grid_is_rejected() {
        let grid = GridSpec::new(8, 2, 2, 3).unwrap();
        let b = Box2D::new(8.0, 8.0, 20.0, 12.0).unwrap();
        let dist = DistanceMap::from_values(12, 4, vec![1.0; 48]).unwrap();
        assert!(matches!(pool_to_grid(&dist, &b, &grid), Err(VisibilityError::Geometry(_))));
    }

    #[test]
    fn crop_size_must_match() {
        let grid = GridSpec::new(8, 2, 2, 3).unwrap();
        let b = Box2D::new(0.0, 0.0, 8.0, 8.0).unwrap();
        let dist = DistanceMap::from_values(4, 4, vec![1.0; 16]).unwrap();
        assert!(matches!(pool_to_grid(&dist, &b, &grid), Err(VisibilityError::CropMismatch { .. })));
    }

    #[test]
    fn normalization_examples() {
        let grid = GridSpec::new(8, 3, 1, 3).unwrap();
        let v = normalize_scores(&means(grid, &[2.0, 4.0, 8.0]), 0).unwrap();
        assert_eq!(v.scores, vec![0.25, 0.5, 1.0]);
        let v = normalize_scores(&means(grid, &[7.0]), 0).unwrap();
        assert_eq!(v.scores, vec![1.0, 0.0, 0.0]);
        assert!(!v.covered[1]);
        let v = normalize_scores(&means(grid, &[3.0, 3.0, 3.0]), 0).unwrap();
        assert_eq!(v.scores, vec![1.0; 3]);
        assert_eq!(
            normalize_scores(&means(grid, &[0.0, 0.0]), 0),
            Err(VisibilityError::NoVisibleRegion)
        );
    }

    #[test]
    fn candidate_examples() {
        let grid = GridSpec::new(8, 3, 1, 3).unwrap();
        let thr = VisibilityThreshold::default();
        let v = normalize_scores(&means(grid, &[0.1, 0.3, 1.0]), 0).unwrap();
        assert_eq!(candidates(&v, thr), vec![grid.cell(0, 1), grid.cell(0, 2)]);
        let v = normalize_scores(&means(grid, &[1.0, 1.0, 4.0]), 0).unwrap();
        assert_eq!(candidates(&v, thr), vec![grid.cell(0, 2)]);
        let v = normalize_scores(&means(grid, &[2.0, 2.0, 2.0]), 0).unwrap();
        assert_eq!(candidates(&v, thr).len(), 3);
    }

    #[test]
    fn threshold_range() {
        assert!(VisibilityThreshold::new(0.0).is_err());
        assert!(VisibilityThreshold::new(1.0).is_err());
        assert_eq!(VisibilityThreshold::default().value(), 0.25);
    }

    proptest! {
        #[test]
        fn candidates_shrink_as_threshold_rises(vals in proptest::collection::vec(0.0..100.0f64, 1..20),
                                               t1 in 0.01..0.99f64, t2 in 0.01..0.99f64) {
            prop_assume!(vals.iter().any(|v| *v > 0.0));
            let grid = GridSpec::new(4, vals.len(), 1, 3).unwrap();
            let v = normalize_scores(&means(grid, &vals), 0).unwrap();
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = candidates(&v, VisibilityThreshold::new(lo).unwrap());
            let b = candidates(&v, VisibilityThreshold::new(hi).unwrap());
            prop_assert!(b.iter().all(|c| a.contains(c)));
        }

        #[test]
        fn argmax_preserved_under_monotone_map(vals in proptest::collection::vec(0.01..100.0f64, 1..20)) {
            let grid = GridSpec::new(4, vals.len(), 1, 3).unwrap();
            let v = normalize_scores(&means(grid, &vals), 0).unwrap();
            let squashed: Vec<f64> = vals.iter().map(|x| x.ln_1p()).collect();
            let w = normalize_scores(&means(grid, &squashed), 0).unwrap();
            let ones = |g: &VisibilityGrid| g.scores.iter().map(|s| *s == 1.0).collect::<Vec<_>>();
            prop_assert_eq!(ones(&v), ones(&w));
            prop_assert!(v.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        }
    }
}
