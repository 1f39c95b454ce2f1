//! Full-page segmentation into fixed-size screenshot windows.
//!
//! Windows are coordinate frames only; pixel cropping happens elsewhere.
//! Windows stack vertically with a stride of one window height. The last
//! window is anchored to the page bottom, so it may overlap its predecessor.

use serde::{Deserialize, Serialize};

use crate::geom::{denormalize_box, normalize_box, Box, Dims, PixelBox, Point};
use crate::snapshot::{Element, NodePath};

pub const DEFAULT_WINDOW: Dims = Dims::new(1920, 1080);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: u32,
    pub origin_y: u32,
    pub size: Dims,
}

impl Window {
    /// The window's extent in page pixels.
    pub fn frame(&self) -> PixelBox {
        PixelBox::new(
            0,
            self.origin_y,
            self.size.width,
            self.origin_y + self.size.height,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub window_width: u32,
    pub window_height: u32,
    /// Minimum visible-area fraction (inclusive) for an element to be kept
    /// in a window.
    pub min_visible_fraction: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            window_width: DEFAULT_WINDOW.width,
            window_height: DEFAULT_WINDOW.height,
            min_visible_fraction: 0.5,
        }
    }
}

impl SegmentConfig {
    pub fn window(&self) -> Dims {
        Dims::new(self.window_width, self.window_height)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window_width == 0 || self.window_height == 0 {
            return Err("window dimensions must be positive".into());
        }
        if !(self.min_visible_fraction > 0.0 && self.min_visible_fraction <= 1.0) {
            return Err("min_visible_fraction must be in (0, 1]".into());
        }
        Ok(())
    }
}

pub fn plan_windows(page: Dims, window: Dims) -> Vec<Window> {
    let h = window.height.max(1);
    if page.height <= h {
        return vec![Window {
            index: 0,
            origin_y: 0,
            size: Dims::new(window.width, page.height),
        }];
    }
    let mut out = Vec::new();
    let mut origin = 0u32;
    while origin + h <= page.height {
        out.push(Window {
            index: out.len() as u32,
            origin_y: origin,
            size: window,
        });
        origin += h;
    }
    if origin < page.height {
        out.push(Window {
            index: out.len() as u32,
            origin_y: page.height - h,
            size: window,
        });
    }
    out
}

/// Window-local per-mille box of an element, if enough of it is visible.
pub fn remap_element(element: &Element, window: &Window, cfg: &SegmentConfig) -> Option<Box> {
    let area = element.bbox.area();
    if area == 0 {
        return None;
    }
    let inter = element.bbox.intersect(&window.frame())?;
    if (inter.area() as f64) < cfg.min_visible_fraction * area as f64 {
        return None;
    }
    let local = PixelBox::new(
        inter.x1,
        inter.y1 - window.origin_y,
        inter.x2,
        inter.y2 - window.origin_y,
    );
    normalize_box(local, window.size).ok()
}

/// Map a window-local per-mille box back to page pixels.
pub fn to_page_pixels(b: Box, window: &Window) -> PixelBox {
    let local = denormalize_box(b, window.size);
    PixelBox::new(
        local.x1,
        local.y1 + window.origin_y,
        local.x2,
        local.y2 + window.origin_y,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecordKind {
    /// Referring-expression grounding.
    #[serde(rename = "REG")]
    Reg,
    /// Instruction grounding.
    #[serde(rename = "IG")]
    Ig,
}

/// One grounding sample: a screenshot window, a text, and a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingRecord {
    pub snapshot_id: String,
    pub window_index: u32,
    pub kind: RecordKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_box: Option<Box>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_path: Option<NodePath>,
}

impl GroundingRecord {
    pub fn screenshot_ref(&self) -> String {
        screenshot_ref(&self.snapshot_id, self.window_index)
    }
}

/// Opaque screenshot key: snapshot id plus window index.
pub fn screenshot_ref(snapshot_id: &str, window_index: u32) -> String {
    format!("{snapshot_id}#{window_index}")
}

/// REG records ordered by window, then document order.
pub fn emit_reg_records(
    snapshot_id: &str,
    elements: &[Element],
    windows: &[Window],
    cfg: &SegmentConfig,
) -> Vec<GroundingRecord> {
    windows
        .iter()
        .flat_map(|w| {
            elements.iter().filter_map(move |e| {
                remap_element(e, w, cfg).map(|b| GroundingRecord {
                    snapshot_id: snapshot_id.to_string(),
                    window_index: w.index,
                    kind: RecordKind::Reg,
                    text: e.referring_expression.clone(),
                    target_point: None,
                    target_box: Some(b),
                    node_path: Some(e.node_path.clone()),
                })
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(x1: u32, y1: u32, x2: u32, y2: u32) -> Element {
        Element {
            node_path: NodePath(vec![0]),
            role: "button".into(),
            referring_expression: "Go".into(),
            bbox: PixelBox::new(x1, y1, x2, y2),
        }
    }

    fn origins(page_h: u32) -> Vec<u32> {
        plan_windows(Dims::new(1920, page_h), DEFAULT_WINDOW)
            .iter()
            .map(|w| w.origin_y)
            .collect()
    }

    #[test]
    fn window_planning() {
        assert_eq!(origins(1080), [0]);
        assert_eq!(origins(3240), [0, 1080, 2160]);
        assert_eq!(origins(2500), [0, 1080, 1420]);
        let short = plan_windows(Dims::new(1280, 700), DEFAULT_WINDOW);
        assert_eq!(short.len(), 1);
        assert_eq!(short[0].size, Dims::new(1920, 700));
    }

    #[test]
    fn windows_cover_every_row() {
        for h in [1u32, 500, 1079, 1080, 1081, 2159, 2160, 2161, 5000, 10_799] {
            let ws = plan_windows(Dims::new(1920, h), DEFAULT_WINDOW);
            let mut covered = vec![false; h as usize];
            for w in &ws {
                assert!(w.origin_y + w.size.height <= h);
                for r in w.origin_y..w.origin_y + w.size.height {
                    covered[r as usize] = true;
                }
            }
            assert!(covered.iter().all(|c| *c), "page height {h}");
        }
    }

    #[test]
    fn fully_inside() {
        let w = plan_windows(Dims::new(1920, 1080), DEFAULT_WINDOW)[0];
        let b = remap_element(&el(192, 108, 384, 216), &w, &SegmentConfig::default()).unwrap();
        assert_eq!(b.coords(), [100, 100, 200, 200]);
    }

    #[test]
    fn half_visible_is_kept_tenth_is_not() {
        let cfg = SegmentConfig::default();
        let ws = plan_windows(Dims::new(1920, 2160), DEFAULT_WINDOW);
        // rows 1070..1090: 10 of 20 rows in window 0
        let half = el(0, 1070, 100, 1090);
        assert_eq!(
            half.bbox.intersect(&ws[0].frame()).unwrap().area() * 2,
            half.bbox.area()
        );
        assert!(remap_element(&half, &ws[0], &cfg).is_some());
        assert!(remap_element(&half, &ws[1], &cfg).is_some());
        // rows 1071..1090 leaves 9 of 19 in window 0
        assert!(remap_element(&el(0, 1071, 100, 1090), &ws[0], &cfg).is_none());
        // 10% inside
        let tenth = el(0, 1078, 100, 1098);
        assert!(remap_element(&tenth, &ws[0], &cfg).is_none());
        assert!(remap_element(&tenth, &ws[1], &cfg).is_some());
    }

    #[test]
    fn emission_order_and_counts() {
        let cfg = SegmentConfig::default();
        let ws = plan_windows(Dims::new(1920, 2160), DEFAULT_WINDOW);
        let els = vec![el(0, 0, 10, 10), el(0, 1070, 10, 1090), el(0, 2000, 10, 2010)];
        let mut brute = 0;
        for w in &ws {
            for e in &els {
                if let Some(i) = e.bbox.intersect(&w.frame()) {
                    if i.area() * 2 >= e.bbox.area() {
                        brute += 1;
                    }
                }
            }
        }
        let recs = emit_reg_records("p", &els, &ws, &cfg);
        assert_eq!(recs.len(), brute);
        assert_eq!(recs.len(), 4);
        let order: Vec<u32> = recs.iter().map(|r| r.window_index).collect();
        assert_eq!(order, [0, 0, 1, 1]);
    }

    #[test]
    fn inverse_mapping_within_a_pixel() {
        let ws = plan_windows(Dims::new(1920, 2500), DEFAULT_WINDOW);
        let e = el(333, 1500, 1777, 1999);
        let w = &ws[2];
        let b = remap_element(&e, w, &SegmentConfig::default()).unwrap();
        let back = to_page_pixels(b, w);
        let clipped = e.bbox.intersect(&w.frame()).unwrap();
        for (a, c) in [back.x1, back.y1, back.x2, back.y2]
            .iter()
            .zip([clipped.x1, clipped.y1, clipped.x2, clipped.y2])
        {
            assert!(a.abs_diff(c) <= 1);
        }
    }
}
