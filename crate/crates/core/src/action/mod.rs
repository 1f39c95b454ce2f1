//! The unified action space.
//!
//! Three basic actions (`CLICK`, `TYPE`, `SCROLL`) are available everywhere.
//! Custom actions are declared per dataset through a [`Vocabulary`], which
//! fixes the argument slots each custom name carries.

mod registry;
mod text;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Box, GeomError, Point};

pub use registry::{canonicalize, AliasEntry, AliasRegistry, ArgRule, RegistryError};
pub use text::{parse_action, serialize_action, Dialect};

pub const CLICK: &str = "CLICK";
pub const TYPE: &str = "TYPE";
pub const SCROLL: &str = "SCROLL";

/// Custom actions every vocabulary starts with, with their argument slots.
pub const BUILTIN_CUSTOM: &[(&str, &[Slot])] = &[
    ("LONG_PRESS", &[Slot::Point]),
    ("OPEN_APP", &[Slot::Text]),
    ("DRAG", &[Slot::Box]),
    ("PRESS_BACK", &[]),
    ("PRESS_HOME", &[]),
    ("PRESS_ENTER", &[]),
    ("WAIT", &[]),
    ("COMPLETE", &[]),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("syntax error at byte {pos}: expected {expected}")]
    Syntax { pos: usize, expected: String },
    #[error("coordinate at byte {pos}: {source}")]
    Coordinate {
        pos: usize,
        #[source]
        source: GeomError,
    },
    #[error("unknown action `{name}` at byte {pos}")]
    UnknownAction { name: String, pos: usize },
    #[error("`{name}` expects arguments [{expected}], got [{found}]")]
    SlotMismatch {
        name: String,
        expected: String,
        found: String,
    },
    #[error("action text must not be empty")]
    EmptyText,
    #[error("`{0}` is not a canonical action name")]
    InvalidName(String),
    #[error("unknown scroll direction `{0}`")]
    InvalidDirection(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
            Direction::Left => "LEFT",
            Direction::Right => "RIGHT",
        }
    }
}

impl FromStr for Direction {
    type Err = ActionError;
    fn from_str(s: &str) -> Result<Self, ActionError> {
        match s.to_ascii_uppercase().as_str() {
            "UP" => Ok(Direction::Up),
            "DOWN" => Ok(Direction::Down),
            "LEFT" => Ok(Direction::Left),
            "RIGHT" => Ok(Direction::Right),
            _ => Err(ActionError::InvalidDirection(s.to_string())),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A canonical action identifier: `[A-Z][A-Z0-9_]*`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionName(String);

impl ActionName {
    pub fn new(name: impl Into<String>) -> Result<Self, ActionError> {
        let name = name.into();
        let mut chars = name.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
            && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
        if ok {
            Ok(Self(name))
        } else {
            Err(ActionError::InvalidName(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_basic(&self) -> bool {
        matches!(self.0.as_str(), CLICK | TYPE | SCROLL)
    }
}

impl TryFrom<String> for ActionName {
    type Error = ActionError;
    fn try_from(s: String) -> Result<Self, ActionError> {
        ActionName::new(s)
    }
}

impl From<ActionName> for String {
    fn from(n: ActionName) -> String {
        n.0
    }
}

impl fmt::Display for ActionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Non-empty action text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionText(String);

impl ActionText {
    pub fn new(text: impl Into<String>) -> Result<Self, ActionError> {
        let text = text.into();
        if text.is_empty() {
            Err(ActionError::EmptyText)
        } else {
            Ok(Self(text))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ActionText {
    type Error = ActionError;
    fn try_from(s: String) -> Result<Self, ActionError> {
        ActionText::new(s)
    }
}

impl From<ActionText> for String {
    fn from(t: ActionText) -> String {
        t.0
    }
}

/// Argument kinds, in their fixed serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Point,
    Box,
    Text,
    Direction,
}

impl Slot {
    pub fn as_str(&self) -> &'static str {
        match self {
            Slot::Point => "point",
            Slot::Box => "box",
            Slot::Text => "text",
            Slot::Direction => "direction",
        }
    }
}

fn slot_list(slots: &[Slot]) -> String {
    slots.iter().map(Slot::as_str).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CustomAction {
    name: ActionName,
    pub point: Option<Point>,
    pub bbox: Option<Box>,
    pub text: Option<ActionText>,
    pub direction: Option<Direction>,
}

impl CustomAction {
    pub fn new(name: ActionName) -> Result<Self, ActionError> {
        if name.is_basic() {
            return Err(ActionError::InvalidName(format!(
                "{name} is a basic action, not a custom one"
            )));
        }
        Ok(Self {
            name,
            point: None,
            bbox: None,
            text: None,
            direction: None,
        })
    }

    pub fn name(&self) -> &ActionName {
        &self.name
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut v = Vec::new();
        if self.point.is_some() {
            v.push(Slot::Point);
        }
        if self.bbox.is_some() {
            v.push(Slot::Box);
        }
        if self.text.is_some() {
            v.push(Slot::Text);
        }
        if self.direction.is_some() {
            v.push(Slot::Direction);
        }
        v
    }
}

/// A single action in the unified space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ActionRecord", into = "ActionRecord")]
pub enum UnifiedAction {
    Click(Point),
    Type(ActionText),
    Scroll(Direction),
    Custom(CustomAction),
}

impl UnifiedAction {
    pub fn click(point: Point) -> Self {
        UnifiedAction::Click(point)
    }

    pub fn type_text(text: impl Into<String>) -> Result<Self, ActionError> {
        Ok(UnifiedAction::Type(ActionText::new(text)?))
    }

    pub fn scroll(direction: Direction) -> Self {
        UnifiedAction::Scroll(direction)
    }

    /// A custom action with no arguments.
    pub fn custom(name: &str) -> Result<Self, ActionError> {
        Ok(UnifiedAction::Custom(CustomAction::new(ActionName::new(name)?)?))
    }

    pub fn name(&self) -> &str {
        match self {
            UnifiedAction::Click(_) => CLICK,
            UnifiedAction::Type(_) => TYPE,
            UnifiedAction::Scroll(_) => SCROLL,
            UnifiedAction::Custom(c) => c.name.as_str(),
        }
    }

    pub fn point(&self) -> Option<Point> {
        match self {
            UnifiedAction::Click(p) => Some(*p),
            UnifiedAction::Custom(c) => c.point,
            _ => None,
        }
    }

    pub fn bbox(&self) -> Option<Box> {
        match self {
            UnifiedAction::Custom(c) => c.bbox,
            _ => None,
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            UnifiedAction::Type(t) => Some(t.as_str()),
            UnifiedAction::Custom(c) => c.text.as_ref().map(ActionText::as_str),
            _ => None,
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        match self {
            UnifiedAction::Scroll(d) => Some(*d),
            UnifiedAction::Custom(c) => c.direction,
            _ => None,
        }
    }

    pub fn slots(&self) -> Vec<Slot> {
        match self {
            UnifiedAction::Click(_) => vec![Slot::Point],
            UnifiedAction::Type(_) => vec![Slot::Text],
            UnifiedAction::Scroll(_) => vec![Slot::Direction],
            UnifiedAction::Custom(c) => c.slots(),
        }
    }

    /// Assemble an action from a canonical name and slot values.
    ///
    /// Exactly the slots present are carried; basic actions require their
    /// single slot.
    pub fn from_parts(
        name: &ActionName,
        point: Option<Point>,
        bbox: Option<Box>,
        text: Option<ActionText>,
        direction: Option<Direction>,
    ) -> Result<Self, ActionError> {
        let found: Vec<Slot> = [
            point.map(|_| Slot::Point),
            bbox.map(|_| Slot::Box),
            text.as_ref().map(|_| Slot::Text),
            direction.map(|_| Slot::Direction),
        ]
        .into_iter()
        .flatten()
        .collect();
        let mismatch = |expected: &[Slot]| ActionError::SlotMismatch {
            name: name.to_string(),
            expected: slot_list(expected),
            found: slot_list(&found),
        };
        match name.as_str() {
            CLICK => match (point, bbox, &text, direction) {
                (Some(p), None, None, None) => Ok(UnifiedAction::Click(p)),
                _ => Err(mismatch(&[Slot::Point])),
            },
            TYPE => match (point, bbox, text, direction) {
                (None, None, Some(t), None) => Ok(UnifiedAction::Type(t)),
                _ => Err(mismatch(&[Slot::Text])),
            },
            SCROLL => match (point, bbox, &text, direction) {
                (None, None, None, Some(d)) => Ok(UnifiedAction::Scroll(d)),
                _ => Err(mismatch(&[Slot::Direction])),
            },
            _ => {
                let mut c = CustomAction::new(name.clone())?;
                c.point = point;
                c.bbox = bbox;
                c.text = text;
                c.direction = direction;
                Ok(UnifiedAction::Custom(c))
            }
        }
    }
}

impl fmt::Display for UnifiedAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_action(self, Dialect::Tagged))
    }
}

/// Structured JSON form used inside line-delimited records.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionRecord {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    point: Option<Point>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    bbox: Option<Box>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Direction>,
}

impl TryFrom<ActionRecord> for UnifiedAction {
    type Error = ActionError;
    fn try_from(r: ActionRecord) -> Result<Self, ActionError> {
        let text = r.text.map(ActionText::new).transpose()?;
        UnifiedAction::from_parts(&ActionName::new(r.name)?, r.point, r.bbox, text, r.direction)
    }
}

impl From<UnifiedAction> for ActionRecord {
    fn from(a: UnifiedAction) -> Self {
        ActionRecord {
            name: a.name().to_string(),
            point: a.point(),
            bbox: a.bbox(),
            text: a.text().map(str::to_string),
            direction: a.direction(),
        }
    }
}

/// The set of custom actions a dataset declares, with their argument slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    custom: BTreeMap<ActionName, Vec<Slot>>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Vocabulary {
    pub fn builtin() -> Self {
        let custom = BUILTIN_CUSTOM
            .iter()
            .map(|(n, s)| (ActionName(n.to_string()), s.to_vec()))
            .collect();
        Self { custom }
    }

    /// Declare (or redeclare) a custom action.
    pub fn declare(&mut self, name: ActionName, mut slots: Vec<Slot>) -> Result<(), ActionError> {
        if name.is_basic() {
            return Err(ActionError::Manifest(format!(
                "cannot redeclare basic action {name}"
            )));
        }
        slots.sort();
        if slots.windows(2).any(|w| w[0] == w[1]) {
            return Err(ActionError::Manifest(format!("duplicate slot in {name}")));
        }
        self.custom.insert(name, slots);
        Ok(())
    }

    /// Add every action of a parsed custom-action manifest.
    pub fn extend_from_manifest(&mut self, manifest_toml: &str) -> Result<(), ActionError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Manifest {
            #[serde(default)]
            action: Vec<Entry>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Entry {
            name: String,
            #[serde(default)]
            slots: Vec<Slot>,
        }
        let m: Manifest = toml::from_str(manifest_toml).map_err(|e| ActionError::Manifest(e.to_string()))?;
        for e in m.action {
            self.declare(ActionName::new(e.name)?, e.slots)?;
        }
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        matches!(name, CLICK | TYPE | SCROLL) || self.custom.keys().any(|k| k.as_str() == name)
    }

    /// Argument slots for a canonical name, if known.
    pub fn slots(&self, name: &str) -> Option<Vec<Slot>> {
        match name {
            CLICK => Some(vec![Slot::Point]),
            TYPE => Some(vec![Slot::Text]),
            SCROLL => Some(vec![Slot::Direction]),
            _ => self
                .custom
                .iter()
                .find(|(k, _)| k.as_str() == name)
                .map(|(_, v)| v.clone()),
        }
    }

    pub fn custom_names(&self) -> impl Iterator<Item = &ActionName> {
        self.custom.keys()
    }

    /// Check that an action is declared and carries exactly its slots.
    pub fn check(&self, action: &UnifiedAction) -> Result<(), ActionError> {
        let expected = self
            .slots(action.name())
            .ok_or_else(|| ActionError::UnknownAction {
                name: action.name().to_string(),
                pos: 0,
            })?;
        let found = action.slots();
        if expected != found {
            return Err(ActionError::SlotMismatch {
                name: action.name().to_string(),
                expected: slot_list(&expected),
                found: slot_list(&found),
            });
        }
        Ok(())
    }
}
