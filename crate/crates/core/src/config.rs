//! Single-file pipeline configuration with dotted-key overrides.
//!
//! ```toml
//! seed = 42
//! workers = 4
//!
//! [paths]
//! corpus = "snapshots"
//! environments = "envs"
//! adapters = ["../adapters/web.toml"]
//! source_steps = ["../adapters/web_steps.jsonl"]
//! output = "out"
//!
//! [filter]
//! max_elements_per_page = 10
//! ```
//!
//! Relative paths resolve against the config file's directory. Overrides
//! such as `filter.max_elements_per_page=5` are applied on top of the file;
//! values parse as TOML and fall back to plain strings.
//!
//! Component seeds are not set directly: each stochastic component derives
//! its seed from the global `seed` and a fixed label.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotatorConfig, PromptTemplate};
use crate::eval::Predictor;
use crate::explore::PolicyKind;
use crate::filter::FilterConfig;
use crate::records::sha256_hex;
use crate::rng::derive_seed;
use crate::segment::SegmentConfig;
use crate::snapshot::ExtractConfig;
use crate::unify::{DEFAULT_PACK_SIZE, DEFAULT_PREFIX_POOL, DEFAULT_TEMPLATE_POOL};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory of snapshot files (`.json` single, `.jsonl` batch).
    pub corpus: Option<String>,
    /// Directory of environment files.
    pub environments: Option<String>,
    pub adapters: Vec<String>,
    pub source_steps: Vec<String>,
    /// Optional key-value alias registry applied before adapters.
    pub aliases: Option<String>,
    pub error_patterns: Option<String>,
    /// Stub client script; without one the stub echoes `echo_template`.
    pub stub_script: Option<String>,
    /// Agent steps with predictions to score instead of running a predictor.
    pub predictions: Option<String>,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Fail the stage on the first invalid snapshot instead of skipping it.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub policy: PolicyKind,
    pub max_steps: usize,
    /// Random walks per environment.
    pub walks: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Dfs,
            max_steps: 500,
            walks: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_chars: usize,
    pub max_in_flight: usize,
    pub prompt: PromptTemplate,
    pub echo_template: String,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        let c = AnnotatorConfig::default();
        Self {
            max_retries: c.max_retries,
            base_delay_ms: c.base_delay_ms,
            max_chars: c.max_chars,
            max_in_flight: c.max_in_flight,
            prompt: c.prompt,
            echo_template: "{instruction}: act on mark {acted_mark}".into(),
        }
    }
}

impl AnnotateConfig {
    pub fn client(&self) -> AnnotatorConfig {
        AnnotatorConfig {
            max_retries: self.max_retries,
            base_delay_ms: self.base_delay_ms,
            max_chars: self.max_chars,
            max_in_flight: self.max_in_flight,
            prompt: self.prompt.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnifyConfig {
    pub pack_size: usize,
    pub prefix_pool: u32,
    pub template_pool: u32,
}

impl Default for UnifyConfig {
    fn default() -> Self {
        Self {
            pack_size: DEFAULT_PACK_SIZE,
            prefix_pool: DEFAULT_PREFIX_POOL,
            template_pool: DEFAULT_TEMPLATE_POOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub predictor: Predictor,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            predictor: Predictor::GtEcho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses one per core. Outputs do not depend on it.
    pub workers: usize,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub extract: ExtractConfig,
    pub filter: FilterConfig,
    pub segment: SegmentConfig,
    pub explore: ExploreConfig,
    pub annotate: AnnotateConfig,
    pub unify: UnifyConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            paths: PathsConfig {
                output: "out".into(),
                ..PathsConfig::default()
            },
            ingest: IngestConfig::default(),
            extract: ExtractConfig::default(),
            filter: FilterConfig::default(),
            segment: SegmentConfig::default(),
            explore: ExploreConfig::default(),
            annotate: AnnotateConfig::default(),
            unify: UnifyConfig::default(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| ConfigError::Override(key.into()))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl PipelineConfig {
    /// Parse config text, apply `key=value` overrides, then validate.
    pub fn from_toml_str(src: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = toml::from_str(src).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(o.clone()))?;
            set_dotted(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        if cfg.paths.output.is_empty() {
            cfg.paths.output = "out".into();
        }
        cfg.filter.seed = derive_seed(cfg.seed, "filter");
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<(Self, PathBuf), ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let cfg = Self::from_toml_str(&src, overrides)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, base))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |s: String| ConfigError::Invalid(s);
        self.filter.validate().map_err(|e| inv(format!("filter: {e}")))?;
        self.segment
            .validate()
            .map_err(|e| inv(format!("segment: {e}")))?;
        self.annotate
            .client()
            .validate()
            .map_err(|e| inv(format!("annotate: {e}")))?;
        if self.explore.max_steps == 0 {
            return Err(inv("explore.max_steps must be at least 1".into()));
        }
        if self.unify.pack_size == 0 || self.unify.prefix_pool == 0 || self.unify.template_pool == 0 {
            return Err(inv(
                "unify pack_size, prefix_pool and template_pool must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Check that every configured input path exists under `base`.
    pub fn check_paths(&self, base: &Path) -> Result<(), ConfigError> {
        let p = &self.paths;
        let all = p
            .corpus
            .iter()
            .chain(&p.environments)
            .chain(&p.adapters)
            .chain(&p.source_steps)
            .chain(&p.aliases)
            .chain(&p.error_patterns)
            .chain(&p.stub_script)
            .chain(&p.predictions);
        for rel in all {
            if !base.join(rel).exists() {
                return Err(ConfigError::Invalid(format!("path `{rel}` does not exist")));
            }
        }
        Ok(())
    }

    /// Digest of one section's effective settings plus the global seed.
    pub fn section_digest<T: Serialize>(&self, section: &str, value: &T) -> String {
        let v = serde_json::json!({"section": section, "seed": self.seed, "value": value});
        sha256_hex(&serde_json::to_vec(&v).expect("config serializes"))
    }
}
