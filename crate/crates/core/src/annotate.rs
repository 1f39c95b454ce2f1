//! Instruction-grounding annotation: Set-of-Mark request building and a
//! retrying driver over a pluggable completion client.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::explore::{GuiEnvironment, Trajectory};
use crate::geom::{normalize_box, PixelBox, PixelPoint};
use crate::segment::{GroundingRecord, RecordKind};
use crate::snapshot::{extract_elements, Element, ExtractConfig, NodePath};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mark {
    pub index: u32,
    /// Label position: the box's top-left corner.
    pub anchor: PixelPoint,
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub node_path: NodePath,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SomOverlay {
    pub marks: Vec<Mark>,
}

/// Marks numbered from 1 in element (document) order.
pub fn build_overlay(elements: &[Element]) -> SomOverlay {
    let marks = elements
        .iter()
        .enumerate()
        .map(|(i, e)| Mark {
            index: i as u32 + 1,
            anchor: e.bbox.top_left(),
            bbox: e.bbox,
            node_path: e.node_path.clone(),
        })
        .collect();
    let overlay = SomOverlay { marks };
    if overlay.marks.is_empty() {
        log::warn!("set-of-mark overlay has no marks");
    }
    overlay
}

impl SomOverlay {
    pub fn contains(&self, index: u32) -> bool {
        index >= 1 && index as usize <= self.marks.len()
    }

    pub fn mark(&self, index: u32) -> Option<&Mark> {
        self.contains(index).then(|| &self.marks[index as usize - 1])
    }

    /// Index of the mark placed on the node at `path`.
    pub fn index_of(&self, path: &NodePath) -> Option<u32> {
        self.marks.iter().find(|m| &m.node_path == path).map(|m| m.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub high_level_instruction: String,
    pub before_ref: String,
    pub after_ref: String,
    pub overlay: SomOverlay,
    pub acted_mark: u32,
}

impl AnnotationRequest {
    pub fn new(
        high_level_instruction: impl Into<String>,
        before_ref: impl Into<String>,
        after_ref: impl Into<String>,
        overlay: SomOverlay,
        acted_mark: u32,
    ) -> Result<Self, AnnotateError> {
        if !overlay.contains(acted_mark) {
            return Err(AnnotateError::BadMark {
                mark: acted_mark,
                count: overlay.marks.len(),
            });
        }
        Ok(Self {
            high_level_instruction: high_level_instruction.into(),
            before_ref: before_ref.into(),
            after_ref: after_ref.into(),
            overlay,
            acted_mark,
        })
    }

    fn vars(&self) -> BTreeMap<&'static str, String> {
        let table = self
            .overlay
            .marks
            .iter()
            .map(|m| {
                format!(
                    "[{}] at ({}, {}) box ({}, {}, {}, {})",
                    m.index, m.anchor.x, m.anchor.y, m.bbox.x1, m.bbox.y1, m.bbox.x2, m.bbox.y2
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        BTreeMap::from([
            ("instruction", self.high_level_instruction.clone()),
            ("before_ref", self.before_ref.clone()),
            ("after_ref", self.after_ref.clone()),
            ("acted_mark", self.acted_mark.to_string()),
            ("mark_count", self.overlay.marks.len().to_string()),
            ("mark_table", table),
        ])
    }
}

/// Prompt text with `{name}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate(String);

pub const DEFAULT_PROMPT: &str = "\
The user is working towards this goal: {instruction}
Screenshot {before_ref} was taken before an action and {after_ref} after it.
The interactable elements carry numbered marks:
{mark_table}
The action was performed on mark {acted_mark}. Compare the two screenshots
and write one short sub-instruction describing what this action does.";

impl Default for PromptTemplate {
    fn default() -> Self {
        Self(DEFAULT_PROMPT.to_string())
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        Self(text.into())
    }

    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<String, AnnotateError> {
        let mut out = String::with_capacity(self.0.len());
        let mut rest = self.0.as_str();
        while let Some(i) = rest.find(['{', '}']) {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            if tail.starts_with("{{") || tail.starts_with("}}") {
                out.push_str(&tail[..1]);
                rest = &tail[2..];
            } else if tail.starts_with('}') {
                return Err(AnnotateError::Template("unmatched `}`".into()));
            } else {
                let end = tail
                    .find('}')
                    .ok_or_else(|| AnnotateError::Template("unclosed `{`".into()))?;
                let name = &tail[1..end];
                let v = vars
                    .get(name)
                    .ok_or_else(|| AnnotateError::Template(format!("unknown placeholder `{name}`")))?;
                out.push_str(v);
                rest = &tail[end + 1..];
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// What a completion client receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestDocument {
    /// Content digest of the request, stable across runs.
    pub request_id: String,
    pub prompt: String,
    pub instruction: String,
    pub before_ref: String,
    pub after_ref: String,
    pub marks: Vec<Mark>,
    pub acted_mark: u32,
}

impl RequestDocument {
    pub fn new(req: &AnnotationRequest, template: &PromptTemplate) -> Result<Self, AnnotateError> {
        let prompt = template.render(&req.vars())?;
        let body = serde_json::to_vec(req).expect("request serializes");
        let mut h = Sha256::new();
        h.update(&body);
        h.update(prompt.as_bytes());
        Ok(Self {
            request_id: hex::encode(&h.finalize()[..8]),
            prompt,
            instruction: req.high_level_instruction.clone(),
            before_ref: req.before_ref.clone(),
            after_ref: req.after_ref.clone(),
            marks: req.overlay.marks.clone(),
            acted_mark: req.acted_mark,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("transient client failure: {0}")]
    Transient(String),
    #[error("client failure: {0}")]
    Permanent(String),
}

/// Completion-service contract: request document in, response text out.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, request: &RequestDocument) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Scripted {
    Ok(PromptTemplate),
    Transient(String),
    Fail(String),
}

/// Deterministic client driven by a script.
///
/// Script lines are `ok <response template>`, `transient <message>` or
/// `fail <message>`. Attempt `k` of a request plays line `k`; the last line
/// repeats once the script runs out. Response templates take the same
/// placeholders as prompts. A `[<request_id>]` header starts a script for
/// one request; lines before any header form the default script.
#[derive(Debug, Default)]
pub struct StubClient {
    default: Vec<Scripted>,
    per_request: HashMap<String, Vec<Scripted>>,
    attempts: Mutex<HashMap<String, usize>>,
}

impl StubClient {
    pub fn from_script(src: &str) -> Result<Self, AnnotateError> {
        let mut stub = StubClient::default();
        let mut section: Option<String> = None;
        for (n, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(id) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(id.trim().to_string());
                stub.per_request.entry(id.trim().to_string()).or_default();
                continue;
            }
            let (verb, rest) = line.split_once(' ').unwrap_or((line, ""));
            let entry = match verb {
                "ok" => Scripted::Ok(PromptTemplate::new(rest)),
                "transient" => Scripted::Transient(rest.to_string()),
                "fail" => Scripted::Fail(rest.to_string()),
                other => {
                    return Err(AnnotateError::Script(format!(
                        "line {}: unknown verb `{other}`",
                        n + 1
                    )))
                }
            };
            match &section {
                Some(id) => stub.per_request.get_mut(id).expect("section exists").push(entry),
                None => stub.default.push(entry),
            }
        }
        if stub.default.is_empty() && stub.per_request.values().all(Vec::is_empty) {
            return Err(AnnotateError::Script("script has no entries".into()));
        }
        Ok(stub)
    }

    /// Always answers with the rendered template.
    pub fn echo(template: &str) -> Self {
        Self {
            default: vec![Scripted::Ok(PromptTemplate::new(template))],
            ..Self::default()
        }
    }

    pub fn attempts(&self, request_id: &str) -> usize {
        self.attempts
            .lock()
            .unwrap()
            .get(request_id)
            .copied()
            .unwrap_or(0)
    }
}

impl CompletionClient for StubClient {
    fn complete(&self, request: &RequestDocument) -> Result<String, ClientError> {
        let attempt = {
            let mut a = self.attempts.lock().unwrap();
            let c = a.entry(request.request_id.clone()).or_default();
            *c += 1;
            *c - 1
        };
        let script = self
            .per_request
            .get(&request.request_id)
            .filter(|s| !s.is_empty())
            .unwrap_or(&self.default);
        let Some(entry) = script.get(attempt).or(script.last()) else {
            return Err(ClientError::Permanent(format!(
                "no script for request {}",
                request.request_id
            )));
        };
        match entry {
            Scripted::Ok(t) => {
                let vars = BTreeMap::from([
                    ("instruction", request.instruction.clone()),
                    ("before_ref", request.before_ref.clone()),
                    ("after_ref", request.after_ref.clone()),
                    ("acted_mark", request.acted_mark.to_string()),
                    ("mark_count", request.marks.len().to_string()),
                ]);
                t.render(&vars).map_err(|e| ClientError::Permanent(e.to_string()))
            }
            Scripted::Transient(m) => Err(ClientError::Transient(m.clone())),
            Scripted::Fail(m) => Err(ClientError::Permanent(m.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResponse {
    pub sub_instruction: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotated {
    pub response: AnnotationResponse,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_chars: usize,
    pub max_in_flight: usize,
    pub prompt: PromptTemplate,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 200,
            max_chars: 300,
            max_in_flight: 4,
            prompt: PromptTemplate::default(),
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.max_chars == 0 {
            return Err("max_chars must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotateError {
    #[error("acted mark {mark} is not among the {count} overlay marks")]
    BadMark { mark: u32, count: usize },
    #[error("prompt template: {0}")]
    Template(String),
    #[error("stub script: {0}")]
    Script(String),
    #[error("client gave up after {attempts} attempts: {last}")]
    Client { attempts: u32, last: ClientError },
    #[error("empty response")]
    EmptyResponse,
    #[error("response has {len} characters, limit is {max}")]
    TooLong { len: usize, max: usize },
}

/// Send one request, retrying transient failures with exponential backoff.
pub fn annotate(
    request: &AnnotationRequest,
    client: &dyn CompletionClient,
    cfg: &AnnotatorConfig,
) -> Result<Annotated, AnnotateError> {
    let doc = RequestDocument::new(request, &cfg.prompt)?;
    let mut retries = 0u32;
    loop {
        match client.complete(&doc) {
            Ok(text) => {
                let text = text.trim();
                if text.is_empty() {
                    return Err(AnnotateError::EmptyResponse);
                }
                let len = text.chars().count();
                if len > cfg.max_chars {
                    return Err(AnnotateError::TooLong {
                        len,
                        max: cfg.max_chars,
                    });
                }
                return Ok(Annotated {
                    response: AnnotationResponse {
                        sub_instruction: text.to_string(),
                    },
                    retries,
                });
            }
            Err(ClientError::Transient(m)) if retries < cfg.max_retries => {
                let delay = cfg.base_delay_ms.saturating_mul(1 << retries.min(20));
                retries += 1;
                log::info!(
                    "request {}: transient failure ({m}), retry {retries}/{} in {delay} ms",
                    doc.request_id,
                    cfg.max_retries
                );
                std::thread::sleep(Duration::from_millis(delay));
            }
            Err(last) => {
                return Err(AnnotateError::Client {
                    attempts: retries + 1,
                    last,
                })
            }
        }
    }
}

/// Annotate independent requests with at most `max_in_flight` client calls
/// at once. Results keep the input order.
pub fn annotate_all(
    requests: &[AnnotationRequest],
    client: &dyn CompletionClient,
    cfg: &AnnotatorConfig,
) -> Vec<Result<Annotated, AnnotateError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| requests.par_iter().map(|r| annotate(r, client, cfg)).collect())
}

/// A request for one trajectory step together with the step's target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRequest {
    pub snapshot_id: String,
    pub request: AnnotationRequest,
    pub target_box: crate::geom::Box,
}

/// One request per trajectory step whose acted element is interactable.
pub fn requests_for_trajectory(
    env: &GuiEnvironment,
    traj: &Trajectory,
    extract: &ExtractConfig,
) -> Vec<StepRequest> {
    let mut out = Vec::new();
    for step in &traj.steps {
        let (Some(before), Some(after)) = (env.state(&step.state), env.state(&step.next)) else {
            continue;
        };
        let overlay = build_overlay(&extract_elements(before, extract));
        let Some(mark) = overlay.index_of(&step.element) else {
            log::warn!(
                "state `{}`: acted node {} is not interactable, step skipped",
                step.state,
                step.element
            );
            continue;
        };
        let bbox = overlay.mark(mark).expect("mark exists").bbox;
        let target_box = normalize_box(bbox, before.page_size).expect("page dims validated");
        let request = AnnotationRequest::new(
            env.task(),
            crate::segment::screenshot_ref(&before.id, 0),
            crate::segment::screenshot_ref(&after.id, 0),
            overlay,
            mark,
        )
        .expect("mark taken from overlay");
        out.push(StepRequest {
            snapshot_id: before.id.clone(),
            request,
            target_box,
        });
    }
    out
}

/// The IG record for an answered step request.
pub fn ig_record(req: &StepRequest, response: &AnnotationResponse) -> GroundingRecord {
    GroundingRecord {
        snapshot_id: req.snapshot_id.clone(),
        window_index: 0,
        kind: RecordKind::Ig,
        text: response.sub_instruction.clone(),
        target_point: Some(req.target_box.center()),
        target_box: Some(req.target_box),
        node_path: req
            .request
            .overlay
            .mark(req.request.acted_mark)
            .map(|m| m.node_path.clone()),
    }
}
