//! Axis-aligned boxes, overlap measures and grid-cell conversions.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box [{0}, {1}, {2}, {3}]: corners out of order or not finite")]
    InvalidBox(f64, f64, f64, f64),
    #[error("overlap is undefined between two zero-area boxes")]
    UndefinedOverlap,
    #[error("negative box offset {0} (left/top/right/bottom must be >= 0)")]
    NegativeOffset(f64),
    #[error("invalid grid: stride {stride}, {width}x{height} cells")]
    InvalidGrid { stride: u32, width: usize, height: usize },
    #[error("box [{x_min}, {y_min}, {x_max}, {y_max}] lies outside the grid extent {extent_w}x{extent_h}")]
    OutsideGrid {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        extent_w: usize,
        extent_h: usize,
    },
}

/// Box in corner form, continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Box2D {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Converts COCO-style `(x, y, w, h)`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_degenerate(&self) -> bool {
        self.area() <= 0.0
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    pub fn intersection_area(&self, other: &Box2D) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &Box2D) -> Box2D {
        Box2D {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Intersects with `[0, width] x [0, height]`. Returns `None` when nothing is left.
    pub fn clamp_to(&self, width: f64, height: f64) -> Option<Box2D> {
        let b = Box2D {
            x_min: self.x_min.clamp(0.0, width),
            y_min: self.y_min.clamp(0.0, height),
            x_max: self.x_max.clamp(0.0, width),
            y_max: self.y_max.clamp(0.0, height),
        };
        if b.is_degenerate() {
            None
        } else {
            Some(b)
        }
    }

    /// Integer pixel range `[x0, x1) x [y0, y1)` touched by the box.
    pub fn pixel_span(&self) -> PixelSpan {
        let x0 = self.x_min.floor().max(0.0) as usize;
        let y0 = self.y_min.floor().max(0.0) as usize;
        let x1 = (self.x_max.ceil().max(0.0) as usize).max(x0);
        let y1 = (self.y_max.ceil().max(0.0) as usize).max(y0);
        PixelSpan { x0, y0, x1, y1 }
    }

    /// Total order on the corner coordinates, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Box2D) -> Ordering {
        self.x_min
            .total_cmp(&other.x_min)
            .then(self.y_min.total_cmp(&other.y_min))
            .then(self.x_max.total_cmp(&other.x_max))
            .then(self.y_max.total_cmp(&other.y_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelSpan {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelSpan {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

pub fn iou(a: &Box2D, b: &Box2D) -> Result<f64, GeometryError> {
    if a.is_degenerate() && b.is_degenerate() {
        return Err(GeometryError::UndefinedOverlap);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

pub fn giou(a: &Box2D, b: &Box2D) -> Result<f64, GeometryError> {
    if a.is_degenerate() && b.is_degenerate() {
        return Err(GeometryError::UndefinedOverlap);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    Ok(inter / union - (hull - union) / hull)
}

/// One level of a feature pyramid laid over an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub stride: u32,
    pub width: usize,
    pub height: usize,
    pub level: u8,
}

impl GridSpec {
    pub fn new(stride: u32, width: usize, height: usize, level: u8) -> Result<Self, GeometryError> {
        if stride == 0 || width == 0 || height == 0 {
            return Err(GeometryError::InvalidGrid { stride, width, height });
        }
        Ok(Self { stride, width, height, level })
    }

    /// Grid covering an `image_w x image_h` image, rounding partial cells up.
    pub fn for_image(
        image_w: usize,
        image_h: usize,
        stride: u32,
        level: u8,
    ) -> Result<Self, GeometryError> {
        let s = stride.max(1) as usize;
        Self::new(stride, image_w.div_ceil(s), image_h.div_ceil(s), level)
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Pixel extent `(width, height)` covered by all cells.
    pub fn extent(&self) -> (usize, usize) {
        let s = self.stride as usize;
        (self.width * s, self.height * s)
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        cell.level == self.level && cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn cell(&self, row: usize, col: usize) -> CellId {
        CellId { level: self.level, row, col }
    }

    pub fn cell_at_index(&self, index: usize) -> CellId {
        self.cell(index / self.width, index % self.width)
    }

    pub fn cell_center(&self, cell: &CellId) -> (f64, f64) {
        let s = self.stride as f64;
        ((cell.col as f64 + 0.5) * s, (cell.row as f64 + 0.5) * s)
    }

    pub fn cell_box(&self, cell: &CellId) -> Box2D {
        let s = self.stride as f64;
        Box2D {
            x_min: cell.col as f64 * s,
            y_min: cell.row as f64 * s,
            x_max: (cell.col + 1) as f64 * s,
            y_max: (cell.row + 1) as f64 * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub level: u8,
    pub row: usize,
    pub col: usize,
}

/// Left, top, right, bottom distances from an anchor point to the box edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Offsets {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl Offsets {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self { left, top, right, bottom }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.left, self.top, self.right, self.bottom]
    }

    fn validate(&self) -> Result<(), GeometryError> {
        for v in self.to_array() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(GeometryError::NegativeOffset(v));
            }
        }
        Ok(())
    }
}

pub fn decode_box_at(center: (f64, f64), offsets: Offsets) -> Result<Box2D, GeometryError> {
    offsets.validate()?;
    let (cx, cy) = center;
    Box2D::new(
        cx - offsets.left,
        cy - offsets.top,
        cx + offsets.right,
        cy + offsets.bottom,
    )
}

pub fn decode_box(cell: &CellId, grid: &GridSpec, offsets: Offsets) -> Result<Box2D, GeometryError> {
    decode_box_at(grid.cell_center(cell), offsets)
}

/// Inverse of [`decode_box_at`]; offsets may come out negative when the anchor lies outside `b`.
pub fn encode_box_at(center: (f64, f64), b: &Box2D) -> Offsets {
    let (cx, cy) = center;
    Offsets {
        left: cx - b.x_min,
        top: cy - b.y_min,
        right: b.x_max - cx,
        bottom: b.y_max - cy,
    }
}
