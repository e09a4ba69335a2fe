//! Sparse label-map JSON. Cells not listed are negatives.

use super::PipelineError;
use crate::geometry::{GridSpec, Offsets};
use crate::label_assignment::{CellLabel, LabelMap, LevelLabels, PositiveLabel, SkippedInstance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFile {
    pub images: Vec<ImageLabels>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageLabels {
    pub image_id: u64,
    pub levels: Vec<LevelRecord>,
    pub skipped: Vec<SkippedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: u8,
    pub stride: u32,
    pub width: usize,
    pub height: usize,
    pub positives: Vec<PositiveRecord>,
    /// `[row, col]` pairs.
    pub ignore: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositiveRecord {
    pub row: usize,
    pub col: usize,
    pub instance_id: u64,
    pub category_id: u64,
    pub multiplicity: u32,
    pub anchor: [f64; 2],
    /// `[left, top, right, bottom]` distances from the anchor.
    pub targets: [f64; 4],
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub instance_id: u64,
    pub reason: String,
}

impl LabelFile {
    pub fn from_maps(maps: &[LabelMap]) -> Self {
        let images = maps
            .iter()
            .map(|m| ImageLabels {
                image_id: m.image_id,
                levels: m.levels.iter().map(level_record).collect(),
                skipped: m
                    .skipped
                    .iter()
                    .map(|s| SkippedRecord { instance_id: s.instance_id, reason: s.reason.clone() })
                    .collect(),
            })
            .collect();
        Self { images }
    }

    pub fn to_maps(&self) -> Result<Vec<LabelMap>, PipelineError> {
        self.images.iter().map(image_map).collect()
    }
}

fn level_record(l: &LevelLabels) -> LevelRecord {
    let mut positives = Vec::new();
    let mut ignore = Vec::new();
    for (i, label) in l.labels.iter().enumerate() {
        let cell = l.grid.cell_at_index(i);
        match label {
            CellLabel::Negative => {}
            CellLabel::Ignore => ignore.push([cell.row, cell.col]),
            CellLabel::Positive(p) => positives.push(PositiveRecord {
                row: cell.row,
                col: cell.col,
                instance_id: p.instance_id,
                category_id: p.category_id,
                multiplicity: p.multiplicity,
                anchor: [p.anchor.0, p.anchor.1],
                targets: p.targets.to_array(),
                fallback: p.fallback,
            }),
        }
    }
    LevelRecord {
        level: l.grid.level,
        stride: l.grid.stride,
        width: l.grid.width,
        height: l.grid.height,
        positives,
        ignore,
    }
}

fn image_map(img: &ImageLabels) -> Result<LabelMap, PipelineError> {
    let bad = |index: usize, message: String| PipelineError::InvalidRecord { kind: "levels", index, message };
    let mut levels = Vec::with_capacity(img.levels.len());
    for (li, rec) in img.levels.iter().enumerate() {
        let grid = GridSpec::new(rec.stride, rec.width, rec.height, rec.level)
            .map_err(|e| bad(li, e.to_string()))?;
        let mut level = LevelLabels::new(grid);
        let mut slot = |row: usize, col: usize, label: CellLabel| {
            if row >= grid.height || col >= grid.width {
                return Err(bad(li, format!("cell ({row}, {col}) outside the {}x{} grid", grid.width, grid.height)));
            }
            let idx = grid.index(row, col);
            if level.labels[idx] != CellLabel::Negative {
                return Err(bad(li, format!("cell ({row}, {col}) listed twice")));
            }
            level.labels[idx] = label;
            Ok(())
        };
        for p in &rec.positives {
            let label = CellLabel::Positive(PositiveLabel {
                instance_id: p.instance_id,
                category_id: p.category_id,
                multiplicity: p.multiplicity,
                anchor: (p.anchor[0], p.anchor[1]),
                targets: Offsets::new(p.targets[0], p.targets[1], p.targets[2], p.targets[3]),
                fallback: p.fallback,
            });
            slot(p.row, p.col, label)?;
        }
        for &[row, col] in &rec.ignore {
            slot(row, col, CellLabel::Ignore)?;
        }
        levels.push(level);
    }
    Ok(LabelMap {
        image_id: img.image_id,
        levels,
        skipped: img
            .skipped
            .iter()
            .map(|s| SkippedInstance { instance_id: s.instance_id, reason: s.reason.clone() })
            .collect(),
    })
}

pub fn label_maps_to_json(maps: &[LabelMap]) -> String {
    super::json::to_string(&LabelFile::from_maps(maps))
}

pub fn parse_label_maps(text: &str, source: &str) -> Result<Vec<LabelMap>, PipelineError> {
    let file: LabelFile = serde_json::from_str(text).map_err(|e| PipelineError::Parse {
        source_name: source.to_string(),
        message: e.to_string(),
    })?;
    file.to_maps()
}
