//! Seeded visibility distance over a cropped box patch.
//!
//! Seeds sit on the patch boundary. The cost of reaching a pixel is the
//! minimum barrier (largest per-channel intensity range along a path) plus
//! `alpha` times the Euclidean distance to the nearest seed. The two terms
//! are minimized separately: the barrier over all seeds with the raster-scan
//! solver, the Euclidean term with an exact distance transform. That sum is
//! a pointwise lower bound on the coupled per-seed minimum, which
//! [`exact_coupled_distance`] computes for small patches.

mod euclid;
mod exact;
mod fast;
mod patch;
pub mod pgm;
mod seeds;

pub use euclid::euclid_dt;
pub use exact::{
    check_oracle_guard, exact_coupled_distance, exact_mbd, ORACLE_MAX_LEVELS, ORACLE_MAX_PIXELS,
};
pub use fast::fast_mbd;
pub use patch::ImagePatch;
pub use seeds::{build_seeds, perimeter, SeedSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MbdError {
    #[error("patch has zero width or height")]
    EmptyPatch,
    #[error("patch is {width}x{height}; the visibility transform needs at least 2x2")]
    PatchTooSmall { width: usize, height: usize },
    #[error("expected {expected} pixel values, got {actual}")]
    PixelCount { expected: usize, actual: usize },
    #[error("crop {span:?} exceeds the {width}x{height} source")]
    CropOutOfBounds {
        span: (usize, usize, usize, usize),
        width: usize,
        height: usize,
    },
    #[error("seed set is empty")]
    NoSeeds,
    #[error("seed ({x}, {y}) is not on the patch boundary")]
    SeedOffBoundary { x: usize, y: usize },
    #[error("duplicate seed ({x}, {y})")]
    DuplicateSeed { x: usize, y: usize },
    #[error(
        "patch too large for the exact search: {pixels} pixels (max {}), {levels} levels per channel (max {})",
        ORACLE_MAX_PIXELS,
        ORACLE_MAX_LEVELS
    )]
    OracleScale { pixels: usize, levels: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("pgm: {0}")]
    Pgm(String),
}

/// Per-pixel barrier values; integral because intensities are 8-bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BarrierMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl BarrierMap {
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MbdConfig {
    /// Weight of the Euclidean term against the barrier term.
    pub alpha: f64,
    /// Boundary sampling stride in pixels.
    pub seed_step: usize,
    /// Number of forward/backward scan pairs.
    pub passes: usize,
}

impl Default for MbdConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            seed_step: 1,
            passes: 3,
        }
    }
}

impl MbdConfig {
    pub fn validate(&self) -> Result<(), MbdError> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(MbdError::InvalidConfig(format!("alpha {} must be >= 0", self.alpha)));
        }
        if self.seed_step == 0 {
            return Err(MbdError::InvalidConfig("seed_step must be >= 1".into()));
        }
        if self.passes == 0 {
            return Err(MbdError::InvalidConfig("passes must be >= 1".into()));
        }
        Ok(())
    }
}

/// `values[p] = barrier[p] + alpha * euclid[p]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub width: usize,
    pub height: usize,
    pub alpha: f64,
    pub values: Vec<f64>,
    pub barrier: Vec<u8>,
    pub euclid: Vec<f64>,
}

impl DistanceMap {
    /// Wraps an arbitrary field (no separated components).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self, MbdError> {
        if values.len() != width * height {
            return Err(MbdError::PixelCount {
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            alpha: 0.0,
            values,
            barrier: Vec::new(),
            euclid: Vec::new(),
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn write_pgm<W: std::io::Write>(&self, out: W) -> std::io::Result<()> {
        pgm::write_pgm16(out, self.width, self.height, &self.values)
    }
}

pub fn visibility_distance_map(patch: &ImagePatch, cfg: &MbdConfig) -> Result<DistanceMap, MbdError> {
    cfg.validate()?;
    if patch.width() < 2 || patch.height() < 2 {
        return Err(MbdError::PatchTooSmall {
            width: patch.width(),
            height: patch.height(),
        });
    }
    let seeds = build_seeds(patch, cfg.seed_step)?;
    let barrier = fast_mbd(patch, &seeds, cfg.passes);
    let euclid = euclid_dt(patch.width(), patch.height(), &seeds);
    let values = barrier
        .values
        .iter()
        .zip(&euclid)
        .map(|(&b, &e)| b as f64 + cfg.alpha * e)
        .collect();
    Ok(DistanceMap {
        width: patch.width(),
        height: patch.height(),
        alpha: cfg.alpha,
        values,
        barrier: barrier.values,
        euclid,
    })
}
