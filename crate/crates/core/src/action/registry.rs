//! Alias registry: resolves dataset-specific action names to canonical ones.
//!
//! The key-value file form maps `(dataset, raw name)` to a canonical name:
//!
//! ```toml
//! [androidcontrol]
//! tap = "CLICK"
//! navigate_home = "PRESS_HOME"
//!
//! ["*"]            # applies to every dataset
//! click = "CLICK"
//! ```
//!
//! Dataset adapters add entries together with an [`ArgRule`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::text::{parse_with, Dialect};
use super::{ActionError, ActionName, Direction, UnifiedAction, Vocabulary};

/// Dataset tag whose entries apply to every dataset.
pub const ANY_DATASET: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("action `{raw}` from dataset `{dataset}` has no canonical mapping")]
    Unmapped { dataset: String, raw: String },
    #[error("alias `{raw}` in `{dataset}` targets undeclared action `{target}`")]
    UndeclaredTarget {
        dataset: String,
        raw: String,
        target: String,
    },
    #[error("alias `{raw}` in `{dataset}` shadows canonical action `{raw}` with `{target}`")]
    ShadowsCanonical {
        dataset: String,
        raw: String,
        target: String,
    },
    #[error("conflicting aliases for `{raw}` in `{dataset}`")]
    Conflict { dataset: String, raw: String },
    #[error("registry file: {0}")]
    Format(String),
    #[error(transparent)]
    Action(#[from] ActionError),
}

/// How raw argument fields fill the slots of a canonical action.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgRule {
    /// Raw field names holding the x and y pixel coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[String; 2]>,
    /// Raw field names holding x1, y1, x2, y2.
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[String; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<String>,
    /// Direction implied by the raw name itself (e.g. `scroll_down`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub canonical: ActionName,
    #[serde(default)]
    pub rule: ArgRule,
}

#[derive(Debug, Clone, Default)]
struct DatasetTable {
    aliases: BTreeMap<String, AliasEntry>,
    vocab: Option<Vocabulary>,
}

/// Read-only after loading; share it freely across threads.
#[derive(Debug, Clone, Default)]
pub struct AliasRegistry {
    datasets: BTreeMap<String, DatasetTable>,
}

impl AliasRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse the key-value registry file.
    pub fn from_toml_str(src: &str) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        reg.merge_toml_str(src)?;
        Ok(reg)
    }

    pub fn merge_toml_str(&mut self, src: &str) -> Result<(), RegistryError> {
        let tables: BTreeMap<String, BTreeMap<String, String>> =
            toml::from_str(src).map_err(|e| RegistryError::Format(e.to_string()))?;
        for (dataset, entries) in tables {
            self.datasets.entry(dataset.clone()).or_default();
            for (raw, canonical) in entries {
                let entry = AliasEntry {
                    canonical: ActionName::new(canonical)?,
                    rule: ArgRule::default(),
                };
                self.insert(&dataset, &raw, entry)?;
            }
        }
        Ok(())
    }

    /// Make the custom actions of `vocab` available in `dataset`.
    pub fn set_vocabulary(&mut self, dataset: &str, vocab: Vocabulary) {
        self.datasets.entry(dataset.to_string()).or_default().vocab = Some(vocab);
    }

    pub fn insert(&mut self, dataset: &str, raw: &str, entry: AliasEntry) -> Result<(), RegistryError> {
        let vocab = self.vocabulary(dataset).clone();
        if !vocab.contains(entry.canonical.as_str()) {
            return Err(RegistryError::UndeclaredTarget {
                dataset: dataset.into(),
                raw: raw.into(),
                target: entry.canonical.to_string(),
            });
        }
        // canonical names must stay fixed points
        if vocab.contains(raw) && raw != entry.canonical.as_str() {
            return Err(RegistryError::ShadowsCanonical {
                dataset: dataset.into(),
                raw: raw.into(),
                target: entry.canonical.to_string(),
            });
        }
        let table = self.datasets.entry(dataset.to_string()).or_default();
        match table.aliases.get(raw) {
            Some(existing) if existing != &entry => Err(RegistryError::Conflict {
                dataset: dataset.into(),
                raw: raw.into(),
            }),
            _ => {
                table.aliases.insert(raw.to_string(), entry);
                Ok(())
            }
        }
    }

    pub fn contains_dataset(&self, dataset: &str) -> bool {
        self.datasets.contains_key(dataset)
    }

    pub fn datasets(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    /// Vocabulary of a dataset; the built-in one when none was declared.
    pub fn vocabulary(&self, dataset: &str) -> &Vocabulary {
        static BUILTIN: std::sync::OnceLock<Vocabulary> = std::sync::OnceLock::new();
        self.datasets
            .get(dataset)
            .and_then(|t| t.vocab.as_ref())
            .unwrap_or_else(|| BUILTIN.get_or_init(Vocabulary::builtin))
    }

    /// Alias entry for a raw name, trying exact then lowercase, dataset then `*`.
    pub fn entry(&self, dataset: &str, raw: &str) -> Option<&AliasEntry> {
        let lower = raw.to_ascii_lowercase();
        [dataset, ANY_DATASET].iter().find_map(|ds| {
            let t = self.datasets.get(*ds)?;
            t.aliases.get(raw).or_else(|| t.aliases.get(&lower))
        })
    }

    pub fn canonicalize(&self, raw: &str, dataset: &str) -> Result<ActionName, RegistryError> {
        if self.vocabulary(dataset).contains(raw) {
            return Ok(ActionName::new(raw)?);
        }
        self.entry(dataset, raw)
            .map(|e| e.canonical.clone())
            .ok_or_else(|| RegistryError::Unmapped {
                dataset: dataset.into(),
                raw: raw.into(),
            })
    }

    /// Parse action text, resolving non-canonical names through this registry.
    pub fn parse(&self, text: &str, dialect: Dialect, dataset: &str) -> Result<UnifiedAction, ActionError> {
        parse_with(text, dialect, self.vocabulary(dataset), &|raw| {
            self.entry(dataset, raw).map(|e| e.canonical.clone())
        })
    }

    /// Every distinct raw (non-canonical) name across all datasets.
    pub fn raw_names(&self) -> BTreeSet<&str> {
        self.datasets
            .values()
            .flat_map(|t| t.aliases.keys().map(String::as_str))
            .collect()
    }

    /// Every `(dataset, raw)` key with its entry.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &AliasEntry)> {
        self.datasets.iter().flat_map(|(ds, t)| {
            t.aliases
                .iter()
                .map(move |(raw, e)| (ds.as_str(), raw.as_str(), e))
        })
    }
}

/// Free-function form of [`AliasRegistry::canonicalize`].
pub fn canonicalize(raw: &str, dataset: &str, registry: &AliasRegistry) -> Result<ActionName, RegistryError> {
    registry.canonicalize(raw, dataset)
}
