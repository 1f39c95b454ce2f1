use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{NodePath, NodeTree, PageSnapshot};
use crate::geom::PixelBox;

/// An interactable element with its referring expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Element {
    pub node_path: NodePath,
    pub role: String,
    pub referring_expression: String,
    pub bbox: PixelBox,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    /// Roles that are always interactable.
    pub roles: BTreeSet<String>,
    /// Roles that count only when the node carries a title (name or
    /// `title` attribute), e.g. SVG images.
    pub titled_roles: BTreeSet<String>,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            roles: set(&[
                "button",
                "link",
                "scrollbar",
                "searchbox",
                "textbox",
                "checkbox",
                "combobox",
                "menuitem",
                "tab",
            ]),
            titled_roles: set(&["svg"]),
        }
    }
}

fn clean(s: &str) -> Option<String> {
    let joined = s.split_whitespace().collect::<Vec<_>>().join(" ");
    (!joined.is_empty()).then_some(joined)
}

/// Accessible name, then `title`, then inner text, then `aria-label`.
/// Whitespace runs collapse to one space.
pub fn referring_expression(node: &NodeTree) -> Option<String> {
    let attr = |k: &str| node.attributes.get(k).map(String::as_str);
    [
        node.name.as_deref(),
        attr("title"),
        node.text.as_deref(),
        attr("aria-label"),
    ]
    .into_iter()
    .flatten()
    .find_map(clean)
}

fn has_title(node: &NodeTree) -> bool {
    node.name.as_deref().and_then(clean).is_some()
        || node.attributes.get("title").and_then(|t| clean(t)).is_some()
}

impl ExtractConfig {
    fn interactable(&self, node: &NodeTree) -> bool {
        let role = node.role.to_ascii_lowercase();
        self.roles.contains(&role) || (self.titled_roles.contains(&role) && has_title(node))
    }
}

/// Visible, interactable, named elements in document order.
pub fn extract_elements(snapshot: &PageSnapshot, cfg: &ExtractConfig) -> Vec<Element> {
    snapshot
        .root
        .walk()
        .into_iter()
        .filter(|(_, n)| n.visible && n.bbox.area() > 0 && cfg.interactable(n))
        .filter_map(|(path, n)| {
            Some(Element {
                node_path: path,
                role: n.role.to_ascii_lowercase(),
                referring_expression: referring_expression(n)?,
                bbox: n.bbox,
            })
        })
        .collect()
}
