//! Detection primitives for rigid objects under occlusion: a seeded
//! minimum-barrier visibility transform, visibility-guided positive
//! sampling on detector grids, confidence-weighted box fusion, and the
//! matching losses and AP evaluation.

pub mod barrier_distance;
pub mod geometry;
pub mod box_fusion;
pub mod label_assignment;
pub mod losses_metrics;
pub mod visibility_grid;
pub mod pipeline_io;
