use super::{ImagePatch, MbdError};
use std::collections::HashSet;

/// Pixel positions `(x, y)` on the outermost ring of a patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedSet {
    positions: Vec<(usize, usize)>,
}

impl SeedSet {
    pub fn new(
        positions: Vec<(usize, usize)>,
        width: usize,
        height: usize,
    ) -> Result<Self, MbdError> {
        if positions.is_empty() {
            return Err(MbdError::NoSeeds);
        }
        let mut seen = HashSet::with_capacity(positions.len());
        for &(x, y) in &positions {
            let inside = x < width && y < height;
            let on_ring = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            if !inside || !on_ring {
                return Err(MbdError::SeedOffBoundary { x, y });
            }
            if !seen.insert((x, y)) {
                return Err(MbdError::DuplicateSeed { x, y });
            }
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Clockwise perimeter walk starting at the top-left corner, each pixel once.
pub fn perimeter(width: usize, height: usize) -> Vec<(usize, usize)> {
    let mut walk = Vec::with_capacity(2 * (width + height));
    let mut seen = HashSet::new();
    let mut push = |p: (usize, usize), walk: &mut Vec<(usize, usize)>| {
        if seen.insert(p) {
            walk.push(p);
        }
    };
    for x in 0..width {
        push((x, 0), &mut walk);
    }
    for y in 1..height {
        push((width - 1, y), &mut walk);
    }
    for x in (0..width.saturating_sub(1)).rev() {
        push((x, height - 1), &mut walk);
    }
    for y in (1..height.saturating_sub(1)).rev() {
        push((0, y), &mut walk);
    }
    walk
}

/// Every `seed_step`-th perimeter pixel plus the four corners, in walk order.
pub fn build_seeds(patch: &ImagePatch, seed_step: usize) -> Result<SeedSet, MbdError> {
    if seed_step == 0 {
        return Err(MbdError::InvalidConfig("seed_step must be >= 1".into()));
    }
    let (w, h) = (patch.width(), patch.height());
    let corners = [(0, 0), (w - 1, 0), (w - 1, h - 1), (0, h - 1)];
    let positions = perimeter(w, h)
        .into_iter()
        .enumerate()
        .filter(|(i, p)| i % seed_step == 0 || corners.contains(p))
        .map(|(_, p)| p)
        .collect();
    SeedSet::new(positions, w, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_perimeter() {
        let patch = ImagePatch::filled(4, 4, [0; 3]).unwrap();
        let seeds = build_seeds(&patch, 1).unwrap();
        assert_eq!(seeds.len(), 12);
        assert_eq!(seeds.positions()[0], (0, 0));
        assert_eq!(seeds.positions()[3], (3, 0));
        assert_eq!(seeds.positions()[11], (0, 1));
    }

    #[test]
    fn large_step_keeps_corners() {
        let patch = ImagePatch::filled(4, 4, [0; 3]).unwrap();
        let seeds = build_seeds(&patch, 100).unwrap();
        assert_eq!(seeds.positions(), &[(0, 0), (3, 0), (3, 3), (0, 3)]);
    }

    #[test]
    fn step_two_on_five_by_four() {
        // walk: (0,0) (1,0) (2,0) (3,0) (4,0) (4,1) (4,2) (4,3) (3,3) (2,3) (1,3) (0,3) (0,2) (0,1)
        // even indices: 0 2 4 6 8 10 12 -> plus corners (4,3) at 7 and (0,3) at 11
        let patch = ImagePatch::filled(5, 4, [0; 3]).unwrap();
        let walk = perimeter(5, 4);
        assert_eq!(walk.len(), 14);
        let mut expected: Vec<_> = walk.iter().step_by(2).copied().collect();
        expected.extend([(4, 3), (0, 3)]);
        let seeds = build_seeds(&patch, 2).unwrap();
        let mut got = seeds.positions().to_vec();
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 9);
    }

    #[test]
    fn strip_perimeter_has_no_duplicates() {
        assert_eq!(perimeter(3, 1), vec![(0, 0), (1, 0), (2, 0)]);
        assert_eq!(perimeter(1, 3), vec![(0, 0), (0, 1), (0, 2)]);
        assert_eq!(perimeter(1, 1), vec![(0, 0)]);
    }

    #[test]
    fn seed_set_validation() {
        assert_eq!(SeedSet::new(vec![], 4, 4), Err(MbdError::NoSeeds));
        assert_eq!(
            SeedSet::new(vec![(1, 1)], 4, 4),
            Err(MbdError::SeedOffBoundary { x: 1, y: 1 })
        );
        assert_eq!(
            SeedSet::new(vec![(0, 1), (0, 1)], 4, 4),
            Err(MbdError::DuplicateSeed { x: 0, y: 1 })
        );
    }
}
