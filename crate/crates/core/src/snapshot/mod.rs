//! Serialized interface snapshots (web DOM dumps, A11y-tree dumps).
//!
//! A snapshot file holds one JSON document per page. Nodes are stored as a
//! flat table with child id lists, the way accessibility APIs report them:
//!
//! ```json
//! {"id": "page-1", "platform": "web",
//!  "page_size": [1920, 2500], "viewport": [1920, 1080],
//!  "title": "Example", "body_text": "...",
//!  "root": 0,
//!  "nodes": [
//!    {"id": 0, "role": "document", "bbox": [0, 0, 1920, 2500], "children": [1]},
//!    {"id": 1, "role": "button", "name": "Open", "bbox": [10, 10, 90, 40]}
//!  ]}
//! ```
//!
//! Node fields: `id`, `role`, `name`, `text` (inner text), `attributes`
//! (string map), `bbox` (`[x1, y1, x2, y2]` pixels, half-open), `visible`
//! (default `true`) and `children`. Batches are line-delimited, one
//! snapshot per line.

mod error_page;
mod extract;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Dims, PixelBox};

pub use error_page::{is_error_page, ErrorPatterns};
pub use extract::{extract_elements, referring_expression, Element, ExtractConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SnapshotError {
    #[error("malformed snapshot: {0}")]
    Json(String),
    #[error("schema violation at {path}: {message}")]
    Schema { path: NodePath, message: String },
    #[error("cycle: node {node_id} at {path} is its own ancestor")]
    Cycle { path: NodePath, node_id: u64 },
    #[error("negative or inverted geometry at {path}: {detail}")]
    NegativeGeometry { path: NodePath, detail: String },
}

/// Child-index path from the root; `/` is the root itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in &self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Web,
    Windows,
    Linux,
    Macos,
    Android,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeTree {
    pub id: u64,
    pub role: String,
    pub name: Option<String>,
    pub text: Option<String>,
    pub attributes: BTreeMap<String, String>,
    pub bbox: PixelBox,
    pub visible: bool,
    pub children: Vec<NodeTree>,
}

impl NodeTree {
    /// Node at a child-index path.
    pub fn at(&self, path: &[usize]) -> Option<&NodeTree> {
        path.iter().try_fold(self, |n, &i| n.children.get(i))
    }

    /// Pre-order walk with paths.
    pub fn walk(&self) -> Vec<(NodePath, &NodeTree)> {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::new(), self)];
        while let Some((path, node)) = stack.pop() {
            for (i, c) in node.children.iter().enumerate().rev() {
                let mut p = path.clone();
                p.push(i);
                stack.push((p, c));
            }
            out.push((NodePath(path), node));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.walk().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub path: NodePath,
    pub message: String,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageSnapshot {
    pub id: String,
    pub platform: Platform,
    pub page_size: Dims,
    pub viewport: Dims,
    pub title: Option<String>,
    pub body_text: Option<String>,
    pub root: NodeTree,
    /// Non-fatal issues found while loading (e.g. clamped boxes).
    pub warnings: Vec<LoadWarning>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawSnapshot {
    id: String,
    platform: Platform,
    page_size: [i64; 2],
    viewport: [i64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body_text: Option<String>,
    root: u64,
    nodes: Vec<RawNode>,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u64,
    role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attributes: BTreeMap<String, String>,
    bbox: [i64; 4],
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    visible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<u64>,
}

fn dims(path: &str, v: [i64; 2]) -> Result<Dims, SnapshotError> {
    if v[0] < 1 || v[1] < 1 || v[0] > u32::MAX as i64 || v[1] > u32::MAX as i64 {
        return Err(SnapshotError::Schema {
            path: NodePath::default(),
            message: format!("{path} must be at least 1x1, got {}x{}", v[0], v[1]),
        });
    }
    Ok(Dims::new(v[0] as u32, v[1] as u32))
}

struct Frame {
    idx: usize,
    next_child: usize,
    built: Vec<NodeTree>,
    path: Vec<usize>,
}

/// Parse and validate one snapshot document.
pub fn load_snapshot(bytes: &[u8]) -> Result<PageSnapshot, SnapshotError> {
    let raw: RawSnapshot = serde_json::from_slice(bytes).map_err(|e| SnapshotError::Json(e.to_string()))?;
    from_raw(raw)
}

fn from_raw(raw: RawSnapshot) -> Result<PageSnapshot, SnapshotError> {
    let page_size = dims("page_size", raw.page_size)?;
    let viewport = dims("viewport", raw.viewport)?;
    if viewport.width > page_size.width || viewport.height > page_size.height {
        return Err(SnapshotError::Schema {
            path: NodePath::default(),
            message: format!("viewport {viewport} exceeds page {page_size}"),
        });
    }

    let mut index = HashMap::with_capacity(raw.nodes.len());
    for (i, n) in raw.nodes.iter().enumerate() {
        if index.insert(n.id, i).is_some() {
            return Err(SnapshotError::Schema {
                path: NodePath::default(),
                message: format!("duplicate node id {}", n.id),
            });
        }
    }
    let root_idx = *index.get(&raw.root).ok_or_else(|| SnapshotError::Schema {
        path: NodePath::default(),
        message: format!("root id {} not in node table", raw.root),
    })?;

    let mut warnings = Vec::new();
    let mut seen = vec![false; raw.nodes.len()];
    let mut on_stack = vec![false; raw.nodes.len()];
    seen[root_idx] = true;
    on_stack[root_idx] = true;
    let mut stack = vec![Frame {
        idx: root_idx,
        next_child: 0,
        built: Vec::new(),
        path: Vec::new(),
    }];
    let mut root = None;

    while let Some(top) = stack.last_mut() {
        let node = &raw.nodes[top.idx];
        if top.next_child < node.children.len() {
            let ci = top.next_child;
            top.next_child += 1;
            let child_id = node.children[ci];
            let mut path = top.path.clone();
            path.push(ci);
            let cidx = *index.get(&child_id).ok_or_else(|| SnapshotError::Schema {
                path: NodePath(path.clone()),
                message: format!("dangling child id {child_id}"),
            })?;
            if on_stack[cidx] {
                return Err(SnapshotError::Cycle {
                    path: NodePath(path),
                    node_id: child_id,
                });
            }
            if seen[cidx] {
                return Err(SnapshotError::Schema {
                    path: NodePath(path),
                    message: format!("node {child_id} has more than one parent"),
                });
            }
            seen[cidx] = true;
            on_stack[cidx] = true;
            stack.push(Frame {
                idx: cidx,
                next_child: 0,
                built: Vec::new(),
                path,
            });
        } else {
            let frame = stack.pop().expect("non-empty stack");
            on_stack[frame.idx] = false;
            let node = &raw.nodes[frame.idx];
            let path = NodePath(frame.path);
            let bbox = node_box(node, &path, page_size, &mut warnings)?;
            let tree = NodeTree {
                id: node.id,
                role: node.role.clone(),
                name: node.name.clone(),
                text: node.text.clone(),
                attributes: node.attributes.clone(),
                bbox,
                visible: node.visible,
                children: frame.built,
            };
            match stack.last_mut() {
                Some(parent) => parent.built.push(tree),
                None => root = Some(tree),
            }
        }
    }

    let unreachable = seen.iter().filter(|s| !**s).count();
    if unreachable > 0 {
        warnings.push(LoadWarning {
            path: NodePath::default(),
            message: format!("{unreachable} node(s) unreachable from root ignored"),
        });
    }

    Ok(PageSnapshot {
        id: raw.id,
        platform: raw.platform,
        page_size,
        viewport,
        title: raw.title,
        body_text: raw.body_text,
        root: root.expect("root frame always completes"),
        warnings,
    })
}

fn node_box(
    node: &RawNode,
    path: &NodePath,
    page: Dims,
    warnings: &mut Vec<LoadWarning>,
) -> Result<PixelBox, SnapshotError> {
    let [x1, y1, x2, y2] = node.bbox;
    if x1 < 0 || y1 < 0 || x2 < x1 || y2 < y1 {
        return Err(SnapshotError::NegativeGeometry {
            path: path.clone(),
            detail: format!("bbox [{x1}, {y1}, {x2}, {y2}]"),
        });
    }
    let cap = |v: i64| v.min(u32::MAX as i64) as u32;
    let b = PixelBox::new(cap(x1), cap(y1), cap(x2), cap(y2));
    let clamped = b.clamp_to(page);
    if clamped != b {
        warnings.push(LoadWarning {
            path: path.clone(),
            message: format!(
                "bbox [{x1}, {y1}, {x2}, {y2}] clamped to [{}, {}, {}, {}]",
                clamped.x1, clamped.y1, clamped.x2, clamped.y2
            ),
        });
    }
    Ok(clamped)
}

impl PageSnapshot {
    /// Serialize back to the flat table form (one line, no trailing newline).
    pub fn to_json(&self) -> String {
        let mut nodes = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(n) = stack.pop() {
            nodes.push(RawNode {
                id: n.id,
                role: n.role.clone(),
                name: n.name.clone(),
                text: n.text.clone(),
                attributes: n.attributes.clone(),
                bbox: [
                    n.bbox.x1 as i64,
                    n.bbox.y1 as i64,
                    n.bbox.x2 as i64,
                    n.bbox.y2 as i64,
                ],
                visible: n.visible,
                children: n.children.iter().map(|c| c.id).collect(),
            });
            stack.extend(n.children.iter().rev());
        }
        let raw = RawSnapshot {
            id: self.id.clone(),
            platform: self.platform,
            page_size: [self.page_size.width as i64, self.page_size.height as i64],
            viewport: [self.viewport.width as i64, self.viewport.height as i64],
            title: self.title.clone(),
            body_text: self.body_text.clone(),
            root: self.root.id,
            nodes,
        };
        serde_json::to_string(&raw).expect("snapshot serializes")
    }
}

impl Serialize for PageSnapshot {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v: serde_json::Value =
            serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PageSnapshot {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawSnapshot::deserialize(d)?;
        from_raw(raw).map_err(serde::de::Error::custom)
    }
}

/// Load a line-delimited batch; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn load_snapshot_lines(src: &str) -> Vec<Result<PageSnapshot, (usize, SnapshotError)>> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| load_snapshot(l.as_bytes()).map_err(|e| (i + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_button() -> &'static str {
        r#"{"id":"p","platform":"web","page_size":[100,100],"viewport":[100,100],"root":0,
            "nodes":[{"id":0,"role":"button","name":"Open","bbox":[10,10,50,30]}]}"#
    }

    #[test]
    fn minimal_snapshot() {
        let s = load_snapshot(one_button().as_bytes()).unwrap();
        assert_eq!(s.root.node_count(), 1);
        assert_eq!(s.root.role, "button");
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn oversized_box_is_clamped_with_warning() {
        let src = r#"{"id":"p","platform":"web","page_size":[200,300],"viewport":[200,100],"root":0,
            "nodes":[{"id":0,"role":"document","bbox":[0,0,200,300],"children":[7]},
                     {"id":7,"role":"button","name":"Big","bbox":[150,250,260,420]}]}"#;
        let s = load_snapshot(src.as_bytes()).unwrap();
        // x2 260 -> 200, y2 420 -> 300
        assert_eq!(s.root.children[0].bbox, PixelBox::new(150, 250, 200, 300));
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.warnings[0].path, NodePath(vec![0]));
    }

    #[test]
    fn cycle_is_rejected_with_path() {
        let src = r#"{"id":"p","platform":"web","page_size":[100,100],"viewport":[100,100],"root":0,
            "nodes":[{"id":0,"role":"document","bbox":[0,0,100,100],"children":[1]},
                     {"id":1,"role":"group","bbox":[0,0,10,10],"children":[2]},
                     {"id":2,"role":"group","bbox":[0,0,10,10],"children":[0]}]}"#;
        match load_snapshot(src.as_bytes()) {
            Err(SnapshotError::Cycle { path, node_id }) => {
                assert_eq!(path.to_string(), "/0/0/0");
                assert_eq!(node_id, 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shared_child_and_dangling_child() {
        let shared = r#"{"id":"p","platform":"web","page_size":[100,100],"viewport":[100,100],"root":0,
            "nodes":[{"id":0,"role":"document","bbox":[0,0,100,100],"children":[1,1]},
                     {"id":1,"role":"group","bbox":[0,0,10,10]}]}"#;
        assert!(matches!(
            load_snapshot(shared.as_bytes()),
            Err(SnapshotError::Schema { .. })
        ));
        let dangling = r#"{"id":"p","platform":"web","page_size":[100,100],"viewport":[100,100],"root":0,
            "nodes":[{"id":0,"role":"document","bbox":[0,0,100,100],"children":[9]}]}"#;
        assert!(matches!(
            load_snapshot(dangling.as_bytes()),
            Err(SnapshotError::Schema { .. })
        ));
    }

    #[test]
    fn negative_geometry_is_rejected() {
        let src = r#"{"id":"p","platform":"web","page_size":[100,100],"viewport":[100,100],"root":0,
            "nodes":[{"id":0,"role":"button","bbox":[-5,0,10,10]}]}"#;
        assert!(matches!(
            load_snapshot(src.as_bytes()),
            Err(SnapshotError::NegativeGeometry { .. })
        ));
        let inverted = src.replace("[-5,0,10,10]", "[20,0,10,10]");
        assert!(matches!(
            load_snapshot(inverted.as_bytes()),
            Err(SnapshotError::NegativeGeometry { .. })
        ));
    }

    #[test]
    fn viewport_larger_than_page_is_rejected() {
        let src = one_button().replace("\"viewport\":[100,100]", "\"viewport\":[100,200]");
        assert!(matches!(
            load_snapshot(src.as_bytes()),
            Err(SnapshotError::Schema { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = load_snapshot(one_button().as_bytes()).unwrap();
        let again = load_snapshot(s.to_json().as_bytes()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn batch_reports_line_numbers() {
        let src = format!("{}\n\nnot json\n", one_button().replace('\n', ""));
        let out = load_snapshot_lines(&src);
        assert_eq!(out.len(), 2);
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err((3, SnapshotError::Json(_)))));
    }
}
