//! Dataset unification into the unified action space, plus grounding-record
//! packing for training conversations.
//!
//! Each dataset family is described by a declarative adapter file:
//!
//! ```toml
//! dataset = "mobile_fixture"
//! family = "mobile"
//! coordinates = "pixel"          # or "ratio" for [0, 1] floats
//! screen_width_field = "screen_w"
//! screen_height_field = "screen_h"
//! manifest = "desktop_actions.toml"   # optional custom-action manifest
//!
//! [actions.tap]
//! canonical = "CLICK"
//! point = ["x", "y"]
//! ```
//!
//! Argument fields not named by an action's rule use the standard names
//! `x`/`y`, `x1`/`y1`/`x2`/`y2`, `text` and `direction`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::action::{
    serialize_action, ActionError, ActionName, ActionText, AliasEntry, AliasRegistry, ArgRule, Dialect,
    Direction, RegistryError, Slot, UnifiedAction, Vocabulary,
};
use crate::geom::{to_permille, Box, Dims, Point, PER_MILLE};
use crate::rng::{derive_seed, seeded};
use crate::segment::{GroundingRecord, RecordKind};

#[derive(Debug, Error)]
pub enum UnifyError {
    #[error("no adapter registered for dataset `{0}`")]
    UnknownDataset(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{action}: missing argument `{field}` for its {slot} slot")]
    MissingArg {
        action: String,
        slot: &'static str,
        field: String,
    },
    #[error("argument `{field}` = `{value}` is not a number")]
    BadNumber { field: String, value: String },
    #[error("argument `{field}` = {value} lies outside the source screen ({extent})")]
    OutOfScreen {
        field: String,
        value: String,
        extent: String,
    },
    #[error("dataset `{0}`: step carries no screen dimensions and the adapter has no default")]
    MissingScreen(String),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("adapter file: {0}")]
    Adapter(String),
}

fn string_map<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Scalar {
        S(String),
        N(serde_json::Number),
        B(bool),
    }
    let raw = BTreeMap::<String, Scalar>::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| {
            let s = match v {
                Scalar::S(s) => s,
                Scalar::N(n) => n.to_string(),
                Scalar::B(b) => b.to_string(),
            };
            (k, s)
        })
        .collect())
}

/// A dataset-native action: raw name plus raw argument fields. Numeric JSON
/// values are accepted and kept in their textual form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAction {
    pub raw_action_name: String,
    #[serde(default, deserialize_with = "string_map")]
    pub raw_args: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceStep {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub task: String,
    pub screenshot_ref: String,
    #[serde(flatten)]
    pub action: RawAction,
    /// Earlier actions of the same episode, oldest first.
    #[serde(default)]
    pub history: Vec<RawAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    /// Step-level fields such as screen dimensions.
    #[serde(
        default,
        deserialize_with = "string_map",
        skip_serializing_if = "BTreeMap::is_empty"
    )]
    pub meta: BTreeMap<String, String>,
}

/// One agent sample in the unified action space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub task: String,
    pub screenshot_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen: Option<Dims>,
    /// Earlier actions serialized in the TAGGED dialect.
    #[serde(default)]
    pub history: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub gt_action: UnifiedAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_action: Option<UnifiedAction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Web,
    Mobile,
    Desktop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordinateUnit {
    /// Absolute pixels on the source screen.
    #[default]
    Pixel,
    /// Fractions of the source screen in `[0, 1]`.
    Ratio,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterFile {
    dataset: String,
    family: Family,
    #[serde(default)]
    coordinates: CoordinateUnit,
    #[serde(default)]
    screen_width_field: Option<String>,
    #[serde(default)]
    screen_height_field: Option<String>,
    #[serde(default)]
    default_screen: Option<Dims>,
    #[serde(default)]
    manifest: Option<String>,
    #[serde(default)]
    actions: BTreeMap<String, AdapterAction>,
}

#[derive(Debug, Clone, Deserialize)]
struct AdapterAction {
    canonical: String,
    #[serde(flatten)]
    rule: ArgRule,
}

/// Field mapping for one dataset.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub dataset: String,
    pub family: Family,
    pub coordinates: CoordinateUnit,
    pub screen_width_field: String,
    pub screen_height_field: String,
    pub default_screen: Option<Dims>,
    /// Resolved custom-action manifest path, when the adapter names one.
    pub manifest: Option<std::path::PathBuf>,
    pub vocabulary: Vocabulary,
    /// Raw name to canonical mapping, in raw-name order.
    pub actions: BTreeMap<String, AliasEntry>,
}

impl Adapter {
    pub fn load(path: &Path) -> Result<Self, UnifyError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| UnifyError::Adapter(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&src, path.parent())
    }

    pub fn from_toml_str(src: &str, base: Option<&Path>) -> Result<Self, UnifyError> {
        let f: AdapterFile = toml::from_str(src).map_err(|e| UnifyError::Adapter(e.to_string()))?;
        let mut vocabulary = Vocabulary::builtin();
        let manifest = f
            .manifest
            .as_ref()
            .map(|m| base.map(|b| b.join(m)).unwrap_or_else(|| m.into()));
        if let Some(p) = &manifest {
            let text = std::fs::read_to_string(p)
                .map_err(|e| UnifyError::Adapter(format!("{}: {e}", p.display())))?;
            vocabulary.extend_from_manifest(&text)?;
        }
        if let Some(d) = f.default_screen {
            d.check()
                .map_err(|e| UnifyError::Adapter(format!("default_screen: {e}")))?;
        }
        let mut actions = BTreeMap::new();
        for (raw, a) in f.actions {
            let entry = AliasEntry {
                canonical: ActionName::new(a.canonical)?,
                rule: a.rule,
            };
            actions.insert(raw, entry);
        }
        Ok(Self {
            dataset: f.dataset,
            family: f.family,
            coordinates: f.coordinates,
            screen_width_field: f.screen_width_field.unwrap_or_else(|| "screen_width".into()),
            screen_height_field: f.screen_height_field.unwrap_or_else(|| "screen_height".into()),
            default_screen: f.default_screen,
            manifest,
            vocabulary,
            actions,
        })
    }

    fn screen(&self, meta: &BTreeMap<String, String>) -> Result<Dims, UnifyError> {
        let w = meta.get(&self.screen_width_field);
        let h = meta.get(&self.screen_height_field);
        let dims = match (w, h) {
            (Some(w), Some(h)) => {
                let parse = |field: &str, v: &str| {
                    v.trim()
                        .parse::<u32>()
                        .ok()
                        .filter(|n| *n > 0)
                        .ok_or_else(|| UnifyError::BadNumber {
                            field: field.into(),
                            value: v.into(),
                        })
                };
                Dims::new(
                    parse(&self.screen_width_field, w)?,
                    parse(&self.screen_height_field, h)?,
                )
            }
            _ => self
                .default_screen
                .ok_or_else(|| UnifyError::MissingScreen(self.dataset.clone()))?,
        };
        Ok(dims)
    }

    /// Per-mille value of a raw coordinate field.
    fn coordinate(
        &self,
        args: &BTreeMap<String, String>,
        action: &str,
        slot: Slot,
        field: &str,
        extent: u32,
    ) -> Result<u16, UnifyError> {
        let raw = args.get(field).ok_or_else(|| UnifyError::MissingArg {
            action: action.into(),
            slot: slot.as_str(),
            field: field.into(),
        })?;
        let v = raw.trim();
        let out_of_screen = || UnifyError::OutOfScreen {
            field: field.into(),
            value: v.into(),
            extent: match self.coordinates {
                CoordinateUnit::Pixel => format!("0..={extent} px"),
                CoordinateUnit::Ratio => "0..=1".into(),
            },
        };
        if self.coordinates == CoordinateUnit::Pixel {
            if let Ok(px) = v.parse::<u32>() {
                return if px <= extent {
                    Ok(to_permille(px, extent))
                } else {
                    Err(out_of_screen())
                };
            }
        }
        let f: f64 = v
            .parse()
            .ok()
            .filter(|f: &f64| f.is_finite())
            .ok_or_else(|| UnifyError::BadNumber {
                field: field.into(),
                value: v.into(),
            })?;
        let ratio = match self.coordinates {
            CoordinateUnit::Pixel => f / extent as f64,
            CoordinateUnit::Ratio => f,
        };
        if !(0.0..=1.0).contains(&ratio) {
            return Err(out_of_screen());
        }
        Ok((ratio * PER_MILLE as f64 + 0.5).floor().min(PER_MILLE as f64) as u16)
    }
}

const STD_POINT: [&str; 2] = ["x", "y"];
const STD_BOX: [&str; 4] = ["x1", "y1", "x2", "y2"];
const STD_TEXT: &str = "text";
const STD_DIRECTION: &str = "direction";

fn point_fields(rule: &ArgRule) -> [&str; 2] {
    rule.point
        .as_ref()
        .map(|p| [p[0].as_str(), p[1].as_str()])
        .unwrap_or(STD_POINT)
}

fn box_fields(rule: &ArgRule) -> [&str; 4] {
    rule.bbox
        .as_ref()
        .map(|b| [b[0].as_str(), b[1].as_str(), b[2].as_str(), b[3].as_str()])
        .unwrap_or(STD_BOX)
}

/// Adapters plus the alias registry they populate.
#[derive(Debug, Clone, Default)]
pub struct Unifier {
    registry: AliasRegistry,
    adapters: BTreeMap<String, Adapter>,
}

impl Unifier {
    /// Start from a registry, e.g. one holding global `*` aliases.
    pub fn new(registry: AliasRegistry) -> Self {
        Self {
            registry,
            adapters: BTreeMap::new(),
        }
    }

    pub fn add_adapter(&mut self, adapter: Adapter) -> Result<(), UnifyError> {
        let ds = adapter.dataset.clone();
        if self.adapters.contains_key(&ds) {
            return Err(UnifyError::Adapter(format!("dataset `{ds}` registered twice")));
        }
        self.registry.set_vocabulary(&ds, adapter.vocabulary.clone());
        for (raw, entry) in &adapter.actions {
            self.registry.insert(&ds, raw, entry.clone())?;
        }
        self.adapters.insert(ds, adapter);
        Ok(())
    }

    pub fn registry(&self) -> &AliasRegistry {
        &self.registry
    }

    pub fn adapter(&self, dataset: &str) -> Option<&Adapter> {
        self.adapters.get(dataset)
    }

    pub fn adapters(&self) -> impl Iterator<Item = &Adapter> {
        self.adapters.values()
    }

    fn convert(&self, adapter: &Adapter, raw: &RawAction, screen: Dims) -> Result<UnifiedAction, UnifyError> {
        let ds = adapter.dataset.as_str();
        let name = self.registry.canonicalize(&raw.raw_action_name, ds)?;
        let default_rule = ArgRule::default();
        let rule = self
            .registry
            .entry(ds, &raw.raw_action_name)
            .map(|e| &e.rule)
            .unwrap_or(&default_rule);
        let slots = self
            .registry
            .vocabulary(ds)
            .slots(name.as_str())
            .expect("canonical names are declared");
        let args = &raw.raw_args;
        let action = name.as_str();
        let missing = |slot: Slot, field: &str| UnifyError::MissingArg {
            action: action.into(),
            slot: slot.as_str(),
            field: field.into(),
        };

        let mut point = None;
        let mut bbox = None;
        let mut text = None;
        let mut direction = None;
        for slot in slots {
            match slot {
                Slot::Point => {
                    let [fx, fy] = point_fields(rule);
                    let x = adapter.coordinate(args, action, slot, fx, screen.width)?;
                    let y = adapter.coordinate(args, action, slot, fy, screen.height)?;
                    point = Some(Point::new(x.into(), y.into()).expect("per-mille in range"));
                }
                Slot::Box => {
                    let f = box_fields(rule);
                    let c = [
                        adapter.coordinate(args, action, slot, f[0], screen.width)?,
                        adapter.coordinate(args, action, slot, f[1], screen.height)?,
                        adapter.coordinate(args, action, slot, f[2], screen.width)?,
                        adapter.coordinate(args, action, slot, f[3], screen.height)?,
                    ];
                    bbox = Some(
                        Box::new(c[0].into(), c[1].into(), c[2].into(), c[3].into())
                            .map_err(|e| ActionError::Coordinate { pos: 0, source: e })?,
                    );
                }
                Slot::Text => {
                    let field = rule.text.as_deref().unwrap_or(STD_TEXT);
                    let t = args.get(field).ok_or_else(|| missing(slot, field))?;
                    text = Some(ActionText::new(t.clone())?);
                }
                Slot::Direction => {
                    direction = Some(match rule.fixed_direction {
                        Some(d) => d,
                        None => {
                            let field = rule.direction.as_deref().unwrap_or(STD_DIRECTION);
                            let d = args.get(field).ok_or_else(|| missing(slot, field))?;
                            d.parse::<Direction>()?
                        }
                    });
                }
            }
        }
        Ok(UnifiedAction::from_parts(&name, point, bbox, text, direction)?)
    }

    pub fn unify_step(&self, step: &SourceStep) -> Result<AgentStep, UnifyError> {
        let adapter = self
            .adapters
            .get(&step.dataset)
            .ok_or_else(|| UnifyError::UnknownDataset(step.dataset.clone()))?;
        let screen = adapter.screen(&step.meta)?;
        let gt_action = self.convert(adapter, &step.action, screen)?;
        let history = step
            .history
            .iter()
            .map(|h| {
                self.convert(adapter, h, screen)
                    .map(|a| serialize_action(&a, Dialect::Tagged))
            })
            .collect::<Result<_, _>>()?;
        Ok(AgentStep {
            dataset: Some(step.dataset.clone()),
            split: step.split,
            task: step.task.clone(),
            screenshot_ref: step.screenshot_ref.clone(),
            screen: Some(screen),
            history,
            thought: step.thought.clone(),
            gt_action,
            predicted_action: None,
        })
    }

    /// Map a unified action back to the dataset's raw form. The raw name is
    /// the first alias (in name order) for the canonical action, or the
    /// canonical name itself when the dataset has no alias for it.
    pub fn invert_action(
        &self,
        dataset: &str,
        action: &UnifiedAction,
        screen: Dims,
    ) -> Result<RawAction, UnifyError> {
        let adapter = self
            .adapters
            .get(dataset)
            .ok_or_else(|| UnifyError::UnknownDataset(dataset.into()))?;
        let default_rule = ArgRule::default();
        let (raw_name, rule) = adapter
            .actions
            .iter()
            .find(|(_, e)| {
                e.canonical.as_str() == action.name()
                    && (e.rule.fixed_direction.is_none() || e.rule.fixed_direction == action.direction())
            })
            .map(|(r, e)| (r.clone(), &e.rule))
            .unwrap_or_else(|| (action.name().to_string(), &default_rule));
        let fmt = |v: u16, extent: u32| match adapter.coordinates {
            CoordinateUnit::Pixel => crate::geom::from_permille(v, extent).to_string(),
            CoordinateUnit::Ratio => format!("{}", v as f64 / PER_MILLE as f64),
        };
        let mut args = BTreeMap::new();
        if let Some(p) = action.point() {
            let [fx, fy] = point_fields(rule);
            args.insert(fx.to_string(), fmt(p.x(), screen.width));
            args.insert(fy.to_string(), fmt(p.y(), screen.height));
        }
        if let Some(b) = action.bbox() {
            let f = box_fields(rule);
            let ext = [screen.width, screen.height, screen.width, screen.height];
            for ((field, v), e) in f.iter().zip(b.coords()).zip(ext) {
                args.insert(field.to_string(), fmt(v, e));
            }
        }
        if let Some(t) = action.text() {
            args.insert(
                rule.text.clone().unwrap_or_else(|| STD_TEXT.into()),
                t.to_string(),
            );
        }
        if let (Some(d), None) = (action.direction(), rule.fixed_direction) {
            args.insert(
                rule.direction.clone().unwrap_or_else(|| STD_DIRECTION.into()),
                d.as_str().to_string(),
            );
        }
        Ok(RawAction {
            raw_action_name: raw_name,
            raw_args: args,
        })
    }

    /// Inverse of [`Unifier::unify_step`] for steps produced by it.
    pub fn invert_step(&self, step: &AgentStep) -> Result<SourceStep, UnifyError> {
        let dataset = step
            .dataset
            .clone()
            .ok_or_else(|| UnifyError::UnknownDataset(String::new()))?;
        let adapter = self
            .adapters
            .get(&dataset)
            .ok_or_else(|| UnifyError::UnknownDataset(dataset.clone()))?;
        let screen = step
            .screen
            .ok_or_else(|| UnifyError::MissingScreen(dataset.clone()))?;
        let history = step
            .history
            .iter()
            .map(|h| {
                let a = adapter.vocabulary.parse(h, Dialect::Tagged)?;
                self.invert_action(&dataset, &a, screen)
            })
            .collect::<Result<_, _>>()?;
        let meta = BTreeMap::from([
            (adapter.screen_width_field.clone(), screen.width.to_string()),
            (adapter.screen_height_field.clone(), screen.height.to_string()),
        ]);
        Ok(SourceStep {
            dataset: dataset.clone(),
            split: step.split,
            task: step.task.clone(),
            screenshot_ref: step.screenshot_ref.clone(),
            action: self.invert_action(&dataset, &step.gt_action, screen)?,
            history,
            thought: step.thought.clone(),
            meta,
        })
    }
}

/// Free-function form of [`Unifier::unify_step`].
pub fn unify_step(step: &SourceStep, unifier: &Unifier) -> Result<AgentStep, UnifyError> {
    unifier.unify_step(step)
}

pub const DEFAULT_PACK_SIZE: usize = 15;
pub const DEFAULT_PREFIX_POOL: u32 = 100;
pub const DEFAULT_TEMPLATE_POOL: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationPack<T = GroundingRecord> {
    pub pack_index: usize,
    pub prefix_prompt_id: u32,
    pub samples: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("pack size must be at least 1")]
    ZeroPackSize,
    #[error("prompt pool must hold at least one prompt")]
    EmptyPool,
}

/// Split records in order into packs of `pack_size`; each pack draws a prefix
/// prompt id uniformly from `0..prompt_pool`.
pub fn pack_conversations<T: Clone>(
    records: &[T],
    pack_size: usize,
    prompt_pool: u32,
    seed: u64,
) -> Result<Vec<ConversationPack<T>>, PackError> {
    if pack_size == 0 {
        return Err(PackError::ZeroPackSize);
    }
    if prompt_pool == 0 {
        return Err(PackError::EmptyPool);
    }
    let mut rng = seeded(derive_seed(seed, "pack"));
    Ok(records
        .chunks(pack_size)
        .enumerate()
        .map(|(i, chunk)| ConversationPack {
            pack_index: i,
            prefix_prompt_id: rng.gen_range(0..prompt_pool),
            samples: chunk.to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Point,
    Box,
    Ocr,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [VariantKind::Point, VariantKind::Box, VariantKind::Ocr];
}

/// A REG record reformatted as point grounding, box grounding or OCR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegVariant {
    pub snapshot_id: String,
    pub window_index: u32,
    pub kind: VariantKind,
    pub template_id: u32,
    /// Referring expression given as the query (point and box variants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Box given as the query (OCR variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_box: Option<Box>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_point: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_box: Option<Box>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VariantError {
    #[error("record is not a REG record")]
    NotReg,
    #[error("REG record has no target box")]
    NoBox,
    #[error("template pool must hold at least one template")]
    EmptyPool,
}

impl RegVariant {
    pub fn build(
        record: &GroundingRecord,
        kind: VariantKind,
        template_id: u32,
    ) -> Result<Self, VariantError> {
        if record.kind != RecordKind::Reg {
            return Err(VariantError::NotReg);
        }
        let b = record.target_box.ok_or(VariantError::NoBox)?;
        let mut v = RegVariant {
            snapshot_id: record.snapshot_id.clone(),
            window_index: record.window_index,
            kind,
            template_id,
            expression: None,
            query_box: None,
            target_point: None,
            target_box: None,
            target_text: None,
        };
        match kind {
            VariantKind::Point => {
                v.expression = Some(record.text.clone());
                v.target_point = Some(b.center());
            }
            VariantKind::Box => {
                v.expression = Some(record.text.clone());
                v.target_box = Some(b);
            }
            VariantKind::Ocr => {
                v.query_box = Some(b);
                v.target_text = Some(record.text.clone());
            }
        }
        Ok(v)
    }
}

/// Variant for a single record; kind and template come from a stream keyed
/// by the record's screenshot reference and text.
pub fn variantize_reg(
    record: &GroundingRecord,
    seed: u64,
    template_pool: u32,
) -> Result<RegVariant, VariantError> {
    if template_pool == 0 {
        return Err(VariantError::EmptyPool);
    }
    let key = format!("{}\u{1f}{}", record.screenshot_ref(), record.text);
    let mut rng = seeded(derive_seed(seed, &key));
    let kind = VariantKind::ALL[rng.gen_range(0..3)];
    RegVariant::build(record, kind, rng.gen_range(0..template_pool))
}

/// Variants for a record sequence. Kinds rotate point, box, OCR from a
/// seeded starting offset, so the three kinds stay balanced.
pub fn variantize_all(
    records: &[GroundingRecord],
    seed: u64,
    template_pool: u32,
) -> Result<Vec<RegVariant>, VariantError> {
    if template_pool == 0 {
        return Err(VariantError::EmptyPool);
    }
    let mut rng = seeded(derive_seed(seed, "variant"));
    let offset = rng.gen_range(0..3);
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let kind = VariantKind::ALL[(offset + i) % 3];
            RegVariant::build(r, kind, rng.gen_range(0..template_pool))
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const WEB: &str = include_str!("../fixtures/adapters/web.toml");
    pub const MOBILE: &str = include_str!("../fixtures/adapters/mobile.toml");
    pub const WEB_STEPS: &str = include_str!("../fixtures/adapters/web_steps.jsonl");
    pub const MOBILE_STEPS: &str = include_str!("../fixtures/adapters/mobile_steps.jsonl");
    pub const DESKTOP_STEPS: &str = include_str!("../fixtures/adapters/desktop_steps.jsonl");

    pub fn adapters_dir() -> std::path::PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/adapters")
    }

    pub fn unifier() -> Unifier {
        let mut u = Unifier::default();
        for f in ["web.toml", "mobile.toml", "desktop.toml"] {
            u.add_adapter(Adapter::load(&adapters_dir().join(f)).unwrap())
                .unwrap();
        }
        u
    }

    pub fn steps(src: &str) -> Vec<SourceStep> {
        src.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }
}
