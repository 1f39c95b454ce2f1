//! Pixel and per-mille geometry.
//!
//! Per-mille coordinates are integers in `[0, 1000]` relative to the width
//! and height of an image frame. Pixel geometry uses half-open extents, so a
//! box `(x1, y1, x2, y2)` covers `x2 - x1` columns.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound of the per-mille coordinate range.
pub const PER_MILLE: u16 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeomError {
    #[error("coordinate {value} outside [0, 1000]")]
    OutOfRange { value: i64 },
    #[error("inverted box: ({x1}, {y1}, {x2}, {y2})")]
    Inverted { x1: i64, y1: i64, x2: i64, y2: i64 },
    #[error("non-positive frame dimension {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
}

fn check_permille(value: i64) -> Result<u16, GeomError> {
    if (0..=PER_MILLE as i64).contains(&value) {
        Ok(value as u16)
    } else {
        Err(GeomError::OutOfRange { value })
    }
}

/// A point in per-mille coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 2]", into = "[u16; 2]")]
pub struct Point {
    x: u16,
    y: u16,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Result<Self, GeomError> {
        Ok(Self {
            x: check_permille(x)?,
            y: check_permille(y)?,
        })
    }

    pub fn x(&self) -> u16 {
        self.x
    }

    pub fn y(&self) -> u16 {
        self.y
    }
}

impl TryFrom<[i64; 2]> for Point {
    type Error = GeomError;
    fn try_from([x, y]: [i64; 2]) -> Result<Self, GeomError> {
        Point::new(x, y)
    }
}

impl From<Point> for [u16; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// An axis-aligned box in per-mille coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u16; 4]")]
pub struct Box {
    x1: u16,
    y1: u16,
    x2: u16,
    y2: u16,
}

impl Box {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, GeomError> {
        let b = Self {
            x1: check_permille(x1)?,
            y1: check_permille(y1)?,
            x2: check_permille(x2)?,
            y2: check_permille(y2)?,
        };
        if b.x1 > b.x2 || b.y1 > b.y2 {
            return Err(GeomError::Inverted { x1, y1, x2, y2 });
        }
        Ok(b)
    }

    pub fn x1(&self) -> u16 {
        self.x1
    }
    pub fn y1(&self) -> u16 {
        self.y1
    }
    pub fn x2(&self) -> u16 {
        self.x2
    }
    pub fn y2(&self) -> u16 {
        self.y2
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn area(&self) -> u32 {
        (self.x2 - self.x1) as u32 * (self.y2 - self.y1) as u32
    }

    /// Center, rounded half-up on each axis.
    pub fn center(&self) -> Point {
        Point {
            x: (self.x1 as u32 + self.x2 as u32).div_ceil(2) as u16,
            y: (self.y1 as u32 + self.y2 as u32).div_ceil(2) as u16,
        }
    }
}

impl TryFrom<[i64; 4]> for Box {
    type Error = GeomError;
    fn try_from([x1, y1, x2, y2]: [i64; 4]) -> Result<Self, GeomError> {
        Box::new(x1, y1, x2, y2)
    }
}

impl From<Box> for [u16; 4] {
    fn from(b: Box) -> Self {
        b.coords()
    }
}

/// Pixel dimensions of a page, viewport, window or screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn check(&self) -> Result<(), GeomError> {
        if self.width == 0 || self.height == 0 {
            Err(GeomError::EmptyFrame {
                width: self.width,
                height: self.height,
            })
        } else {
            Ok(())
        }
    }
}

impl From<[u32; 2]> for Dims {
    fn from([width, height]: [u32; 2]) -> Self {
        Self { width, height }
    }
}

impl From<Dims> for [u32; 2] {
    fn from(d: Dims) -> Self {
        [d.width, d.height]
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// Half-open pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct PixelBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl PixelBox {
    pub const fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> u32 {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn top_left(&self) -> PixelPoint {
        PixelPoint {
            x: self.x1,
            y: self.y1,
        }
    }

    /// Center, rounded down.
    pub fn center(&self) -> PixelPoint {
        PixelPoint {
            x: (self.x1 + self.x2) / 2,
            y: (self.y1 + self.y2) / 2,
        }
    }

    pub fn intersect(&self, other: &PixelBox) -> Option<PixelBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        (x1 < x2 && y1 < y2).then_some(PixelBox { x1, y1, x2, y2 })
    }

    /// Clamp to `[0, dims]`, preserving ordering.
    pub fn clamp_to(&self, dims: Dims) -> PixelBox {
        let cx = |v: u32| v.min(dims.width);
        let cy = |v: u32| v.min(dims.height);
        PixelBox {
            x1: cx(self.x1),
            y1: cy(self.y1),
            x2: cx(self.x2),
            y2: cy(self.y2),
        }
    }

    pub fn within(&self, dims: Dims) -> bool {
        self.x2 <= dims.width && self.y2 <= dims.height
    }
}

impl From<[u32; 4]> for PixelBox {
    fn from([x1, y1, x2, y2]: [u32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<PixelBox> for [u32; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Pixel offset to per-mille, rounded half-up and clamped to 1000.
pub fn to_permille(px: u32, extent: u32) -> u16 {
    debug_assert!(extent > 0);
    let v = (px as u64 * 2000 + extent as u64) / (2 * extent as u64);
    v.min(PER_MILLE as u64) as u16
}

/// Per-mille to pixel offset, rounded half-up.
pub fn from_permille(v: u16, extent: u32) -> u32 {
    ((v as u64 * extent as u64 * 2 + 1000) / 2000) as u32
}

/// Normalize a pixel point on a frame of the given size.
pub fn normalize_point(px: PixelPoint, frame: Dims) -> Result<Point, GeomError> {
    frame.check()?;
    Ok(Point {
        x: to_permille(px.x, frame.width),
        y: to_permille(px.y, frame.height),
    })
}

pub fn denormalize_point(p: Point, frame: Dims) -> PixelPoint {
    PixelPoint {
        x: from_permille(p.x, frame.width),
        y: from_permille(p.y, frame.height),
    }
}

pub fn normalize_box(b: PixelBox, frame: Dims) -> Result<Box, GeomError> {
    frame.check()?;
    Ok(Box {
        x1: to_permille(b.x1, frame.width),
        y1: to_permille(b.y1, frame.height),
        x2: to_permille(b.x2, frame.width),
        y2: to_permille(b.y2, frame.height),
    })
}

pub fn denormalize_box(b: Box, frame: Dims) -> PixelBox {
    PixelBox {
        x1: from_permille(b.x1, frame.width),
        y1: from_permille(b.y1, frame.height),
        x2: from_permille(b.x2, frame.width),
        y2: from_permille(b.y2, frame.height),
    }
}
