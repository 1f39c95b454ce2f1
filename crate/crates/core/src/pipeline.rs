//! Stage orchestration with content-addressed run manifests.
//!
//! Every stage reads its inputs, writes its outputs under the output
//! directory and records a manifest in `manifests/<stage>.json` holding the
//! input digests, a digest of the stage's settings and record counts. A
//! stage whose manifest still matches its inputs, settings and outputs is
//! skipped. Paths in manifests are relative to the config directory and
//! manifests carry no timestamps, so identical runs give identical bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{
    annotate_all, ig_record, requests_for_trajectory, AnnotateError, CompletionClient, RequestDocument,
    StubClient,
};
use crate::config::{ConfigError, PipelineConfig};
use crate::eval::evaluate_steps;
use crate::explore::{
    explore, trajectory_to_steps, ExplorationPolicy, GuiEnvironment, PolicyKind, Trajectory,
};
use crate::filter::{cap_elements, filter_page, FilterReport, PageFacts, Verdict};
use crate::geom::Dims;
use crate::records::{self, decode, encode, read_records, sha256_hex, RecordError};
use crate::rng::derive_seed;
use crate::segment::{emit_reg_records, plan_windows, GroundingRecord};
use crate::snapshot::{
    extract_elements, load_snapshot, load_snapshot_lines, Element, ErrorPatterns, PageSnapshot,
};
use crate::unify::{
    pack_conversations, variantize_all, Adapter, AgentStep, SourceStep, Unifier, VariantKind,
};

pub const MANIFEST_SCHEMA: &str = "groundkit.manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("client: {0}")]
    Client(String),
}

impl PipelineError {
    /// Process exit status for this failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
            PipelineError::Client(_) => 4,
        }
    }
}

impl From<ConfigError> for PipelineError {
    fn from(e: ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<RecordError> for PipelineError {
    fn from(e: RecordError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Filter,
    Segment,
    Explore,
    Annotate,
    Unify,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Filter,
        Stage::Segment,
        Stage::Explore,
        Stage::Annotate,
        Stage::Unify,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Filter => "filter",
            Stage::Segment => "segment",
            Stage::Explore => "explore",
            Stage::Annotate => "annotate",
            Stage::Unify => "unify",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub schema: String,
    pub version: u32,
    pub stage: Stage,
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub version: u32,
    pub seed: u64,
    pub stages: Vec<StageManifest>,
}

impl RunManifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub manifest: StageManifest,
    pub skipped: bool,
}

/// One output file produced in memory by a stage body.
struct Output {
    name: &'static str,
    bytes: Vec<u8>,
    records: Option<u64>,
}

impl Output {
    fn records<T: Serialize>(name: &'static str, kind: &str, items: &[T]) -> Self {
        Output {
            name,
            bytes: encode(kind, items),
            records: Some(items.len() as u64),
        }
    }

    fn json<T: Serialize>(name: &'static str, value: &T) -> Self {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializes");
        bytes.push(b'\n');
        Output {
            name,
            bytes,
            records: None,
        }
    }

    fn text(name: &'static str, text: String) -> Self {
        Output {
            name,
            bytes: text.into_bytes(),
            records: None,
        }
    }
}

type Counts = BTreeMap<String, u64>;

/// Accepted page with its capped element list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredPage {
    pub snapshot_id: String,
    pub page_size: Dims,
    pub elements: Vec<Element>,
}

/// Answer to one deduplicated annotation request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub request_id: String,
    pub snapshot_id: String,
    pub acted_mark: u32,
    pub sub_instruction: String,
    pub retries: u32,
}

pub struct Runner {
    cfg: PipelineConfig,
    base: PathBuf,
    out: PathBuf,
    force: bool,
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Data(format!("{context}: {e}"))
}

fn list_files(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = fs::read_dir(&d).map_err(data(d.display()))?;
        for e in entries {
            let p = e.map_err(data(d.display()))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| exts.contains(&x))
            {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl Runner {
    pub fn new(cfg: PipelineConfig, base: impl Into<PathBuf>) -> Self {
        let base = base.into();
        let out = base.join(&cfg.paths.output);
        Self {
            cfg,
            base,
            out,
            force: false,
        }
    }

    /// Rerun stages even when their manifests are current.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.base)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn input(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }

    fn output(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.out.join("manifests").join(format!("{}.json", stage.name()))
    }

    fn require<'a>(&self, v: &'a Option<String>, key: &str) -> Result<&'a str, PipelineError> {
        v.as_deref()
            .ok_or_else(|| PipelineError::Config(format!("`paths.{key}` is not set")))
    }

    fn require_output(&self, name: &str, producer: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.output(name);
        if !p.exists() {
            return Err(PipelineError::Data(format!(
                "{} is missing; run `{}` first",
                self.rel(&p),
                producer.name()
            )));
        }
        Ok(p)
    }

    fn digest_inputs(&self, inputs: &[PathBuf]) -> Result<Vec<FileDigest>, PipelineError> {
        inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(data(self.rel(p)))?;
                Ok(FileDigest {
                    path: self.rel(p),
                    sha256: sha256_hex(&bytes),
                    records: None,
                })
            })
            .collect()
    }

    fn current(&self, stage: Stage, inputs: &[FileDigest], config_digest: &str) -> Option<StageManifest> {
        if self.force {
            return None;
        }
        let bytes = fs::read(self.manifest_path(stage)).ok()?;
        let m: StageManifest = serde_json::from_slice(&bytes).ok()?;
        let outputs_ok = m.outputs.iter().all(|o| {
            fs::read(self.base.join(&o.path))
                .map(|b| sha256_hex(&b) == o.sha256)
                .unwrap_or(false)
        });
        (m.inputs == inputs && m.config_digest == config_digest && outputs_ok).then_some(m)
    }

    fn run_with(
        &self,
        stage: Stage,
        inputs: Vec<PathBuf>,
        config_digest: String,
        body: impl FnOnce() -> Result<(Vec<Output>, Counts), PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        let input_digests = self.digest_inputs(&inputs)?;
        if let Some(m) = self.current(stage, &input_digests, &config_digest) {
            log::info!("{}: up to date", stage.name());
            return Ok(StageOutcome {
                manifest: m,
                skipped: true,
            });
        }
        let (outputs, counts) = body()?;
        let mut digests = Vec::with_capacity(outputs.len());
        for o in outputs {
            let path = self.output(o.name);
            let sha256 = records::write_atomic(&path, &o.bytes)?;
            digests.push(FileDigest {
                path: self.rel(&path),
                sha256,
                records: o.records,
            });
        }
        let manifest = StageManifest {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            stage,
            config_digest,
            inputs: input_digests,
            outputs: digests,
            counts,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        records::write_atomic(&self.manifest_path(stage), &bytes)?;
        log::info!("{}: wrote {} outputs", stage.name(), manifest.outputs.len());
        Ok(StageOutcome {
            manifest,
            skipped: false,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| PipelineError::Config(format!("workers: {e}")))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        self.cfg.check_paths(&self.base)?;
        self.pool()?.install(|| match stage {
            Stage::Ingest => self.ingest(),
            Stage::Filter => self.filter(),
            Stage::Segment => self.segment(),
            Stage::Explore => self.explore(),
            Stage::Annotate => self.annotate(),
            Stage::Unify => self.unify(),
            Stage::Evaluate => self.evaluate(),
        })
    }

    /// Whether the config supplies what a stage needs when run as part of
    /// the whole pipeline.
    fn configured(&self, stage: Stage) -> bool {
        let p = &self.cfg.paths;
        match stage {
            Stage::Ingest | Stage::Filter | Stage::Segment => p.corpus.is_some(),
            Stage::Explore | Stage::Annotate => p.environments.is_some(),
            Stage::Unify => !p.adapters.is_empty() || p.corpus.is_some() || p.environments.is_some(),
            Stage::Evaluate => p.predictions.is_some() || !p.source_steps.is_empty(),
        }
    }

    /// Run every configured stage in order and write `manifest.json`.
    pub fn run_pipeline(&self) -> Result<RunManifest, PipelineError> {
        let mut stages = Vec::new();
        for stage in Stage::ALL {
            if self.configured(stage) {
                stages.push(self.run_stage(stage)?.manifest);
            } else {
                log::info!("{}: not configured, skipped", stage.name());
            }
        }
        let run = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            version: MANIFEST_VERSION,
            seed: self.cfg.seed,
            stages,
        };
        records::write_atomic(&self.out.join("manifest.json"), &run.to_bytes())?;
        Ok(run)
    }

    fn ingest(&self) -> Result<StageOutcome, PipelineError> {
        let dir = self.input(self.require(&self.cfg.paths.corpus, "corpus")?);
        let files = list_files(&dir, &["json", "jsonl"])?;
        let digest = self.cfg.section_digest("ingest", &self.cfg.ingest);
        let strict = self.cfg.ingest.strict;
        self.run_with(Stage::Ingest, files.clone(), digest, || {
            let parsed: Vec<Vec<Result<PageSnapshot, String>>> = files
                .par_iter()
                .map(|f| {
                    let label = self.rel(f);
                    let bytes = match fs::read(f) {
                        Ok(b) => b,
                        Err(e) => return vec![Err(format!("{label}: {e}"))],
                    };
                    if f.extension().is_some_and(|x| x == "jsonl") {
                        load_snapshot_lines(&String::from_utf8_lossy(&bytes))
                            .into_iter()
                            .map(|r| r.map_err(|(line, e)| format!("{label}:{line}: {e}")))
                            .collect()
                    } else {
                        vec![load_snapshot(&bytes).map_err(|e| format!("{label}: {e}"))]
                    }
                })
                .collect();
            let mut seen = HashSet::new();
            let mut snaps = Vec::new();
            let mut rejected = 0u64;
            let mut warnings = 0u64;
            for r in parsed.into_iter().flatten() {
                let problem = match r {
                    Ok(s) if seen.insert(s.id.clone()) => {
                        warnings += s.warnings.len() as u64;
                        for w in &s.warnings {
                            log::warn!("snapshot {}: {w}", s.id);
                        }
                        snaps.push(s);
                        continue;
                    }
                    Ok(s) => format!("duplicate snapshot id `{}`", s.id),
                    Err(e) => e,
                };
                if strict {
                    return Err(PipelineError::Data(problem));
                }
                log::warn!("skipping snapshot: {problem}");
                rejected += 1;
            }
            let counts = Counts::from([
                ("files".into(), files.len() as u64),
                ("snapshots".into(), snaps.len() as u64),
                ("rejected".into(), rejected),
                ("warnings".into(), warnings),
            ]);
            Ok((
                vec![Output::records("snapshots.jsonl", "snapshot", &snaps)],
                counts,
            ))
        })
    }

    fn filter(&self) -> Result<StageOutcome, PipelineError> {
        let src = self.require_output("snapshots.jsonl", Stage::Ingest)?;
        let mut inputs = vec![src.clone()];
        let patterns_path = self.cfg.paths.error_patterns.as_deref().map(|p| self.input(p));
        inputs.extend(patterns_path.clone());
        let digest = self.cfg.section_digest(
            "filter",
            &serde_json::json!({"filter": self.cfg.filter, "extract": self.cfg.extract}),
        );
        self.run_with(Stage::Filter, inputs, digest, || {
            let patterns = match &patterns_path {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(data(self.rel(p)))?;
                    ErrorPatterns::from_lines(&text)
                        .map_err(|e| PipelineError::Config(format!("error patterns: {e}")))?
                }
                None => ErrorPatterns::default(),
            };
            let snaps: Vec<PageSnapshot> = read_records(&src, "snapshot")?;
            let cfg = &self.cfg.filter;
            let results: Vec<(Verdict, usize, Option<FilteredPage>)> = snaps
                .par_iter()
                .map(|s| {
                    let elements = extract_elements(s, &self.cfg.extract);
                    let verdict = filter_page(&PageFacts::from_snapshot(s, &patterns), &elements, cfg);
                    let page = (verdict == Verdict::Accept).then(|| FilteredPage {
                        snapshot_id: s.id.clone(),
                        page_size: s.page_size,
                        elements: cap_elements(&elements, cfg, &s.id),
                    });
                    (verdict, elements.len(), page)
                })
                .collect();
            let mut report = FilterReport::default();
            let mut pages = Vec::new();
            for (verdict, n_in, page) in results {
                report.record(verdict, n_in, page.as_ref().map_or(0, |p| p.elements.len()));
                pages.extend(page);
            }
            debug_assert!(report.balanced());
            let mut counts = Counts::from([
                ("pages_in".into(), report.pages_in),
                ("pages_out".into(), report.pages_out),
                ("elements_in".into(), report.elements_in),
                ("elements_out".into(), report.elements_out),
            ]);
            for (r, n) in &report.rejected {
                let key = serde_json::to_value(r)
                    .expect("reason")
                    .as_str()
                    .unwrap()
                    .to_string();
                counts.insert(format!("rejected_{key}"), *n);
            }
            Ok((
                vec![
                    Output::records("pages.jsonl", "page", &pages),
                    Output::json("filter_report.json", &report),
                ],
                counts,
            ))
        })
    }

    fn segment(&self) -> Result<StageOutcome, PipelineError> {
        let src = self.require_output("pages.jsonl", Stage::Filter)?;
        let digest = self.cfg.section_digest("segment", &self.cfg.segment);
        self.run_with(Stage::Segment, vec![src.clone()], digest, || {
            let pages: Vec<FilteredPage> = read_records(&src, "page")?;
            let cfg = &self.cfg.segment;
            let per_page: Vec<(usize, Vec<GroundingRecord>)> = pages
                .par_iter()
                .map(|p| {
                    let windows = plan_windows(p.page_size, cfg.window());
                    (
                        windows.len(),
                        emit_reg_records(&p.snapshot_id, &p.elements, &windows, cfg),
                    )
                })
                .collect();
            let windows: usize = per_page.iter().map(|(w, _)| w).sum();
            let recs: Vec<GroundingRecord> = per_page.into_iter().flat_map(|(_, r)| r).collect();
            let counts = Counts::from([
                ("pages".into(), pages.len() as u64),
                ("windows".into(), windows as u64),
                ("records".into(), recs.len() as u64),
            ]);
            Ok((vec![Output::records("reg.jsonl", "grounding", &recs)], counts))
        })
    }

    fn env_files(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let dir = self.input(self.require(&self.cfg.paths.environments, "environments")?);
        list_files(&dir, &["json"])
    }

    /// Environment files plus the snapshot files they reference.
    fn env_inputs(&self, envs: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
        let mut inputs = envs.to_vec();
        for e in envs {
            let v: serde_json::Value = serde_json::from_slice(&fs::read(e).map_err(data(self.rel(e)))?)
                .map_err(data(self.rel(e)))?;
            let dir = e.parent().unwrap_or(Path::new("."));
            for s in v["states"].as_array().into_iter().flatten() {
                if let Some(f) = s["snapshot_file"].as_str() {
                    inputs.push(dir.join(f));
                }
            }
        }
        Ok(inputs)
    }

    fn load_envs(&self, files: &[PathBuf]) -> Result<Vec<GuiEnvironment>, PipelineError> {
        let envs: Vec<GuiEnvironment> = files
            .par_iter()
            .map(|f| GuiEnvironment::load(f).map_err(data(self.rel(f))))
            .collect::<Result<_, _>>()?;
        let mut ids = HashSet::new();
        for e in &envs {
            if !ids.insert(e.id().to_string()) {
                return Err(PipelineError::Data(format!(
                    "duplicate environment id `{}`",
                    e.id()
                )));
            }
        }
        Ok(envs)
    }

    fn explore(&self) -> Result<StageOutcome, PipelineError> {
        let files = self.env_files()?;
        let inputs = self.env_inputs(&files)?;
        let digest = self.cfg.section_digest("explore", &self.cfg.explore);
        self.run_with(Stage::Explore, inputs, digest, || {
            let envs = self.load_envs(&files)?;
            let ec = &self.cfg.explore;
            type EnvResult = (Vec<Trajectory>, Vec<PageSnapshot>, usize, usize);
            let results: Vec<EnvResult> = envs
                .par_iter()
                .map(|env| {
                    let runs = match ec.policy {
                        PolicyKind::Dfs => vec![ExplorationPolicy {
                            kind: PolicyKind::Dfs,
                            max_steps: ec.max_steps,
                            seed: 0,
                        }],
                        PolicyKind::RandomWalk => (0..ec.walks)
                            .map(|k| ExplorationPolicy {
                                kind: PolicyKind::RandomWalk,
                                max_steps: ec.max_steps,
                                seed: derive_seed(self.cfg.seed, &format!("explore/{}/{k}", env.id())),
                            })
                            .collect(),
                    };
                    let mut trajs = Vec::new();
                    let mut visited: Vec<String> = Vec::new();
                    let mut backtracks = 0;
                    for p in runs {
                        let ex = explore(env, &p).map_err(data(format!("environment `{}`", env.id())))?;
                        for v in ex.visited {
                            if !visited.contains(&v) {
                                visited.push(v);
                            }
                        }
                        backtracks += ex.backtracks;
                        trajs.extend(ex.trajectories);
                    }
                    let snaps = visited
                        .iter()
                        .map(|s| env.state(s).expect("visited states exist").clone())
                        .collect();
                    Ok((trajs, snaps, visited.len(), backtracks))
                })
                .collect::<Result<_, PipelineError>>()?;
            let mut trajectories = Vec::new();
            let mut snapshots = Vec::new();
            let mut steps = Vec::new();
            let (mut states, mut backtracks) = (0u64, 0u64);
            for ((trajs, snaps, n_states, n_back), env) in results.into_iter().zip(&envs) {
                for t in &trajs {
                    steps.extend(trajectory_to_steps(t, env.task()));
                }
                trajectories.extend(trajs);
                snapshots.extend(snaps);
                states += n_states as u64;
                backtracks += n_back as u64;
            }
            let counts = Counts::from([
                ("environments".into(), envs.len() as u64),
                ("states_visited".into(), states),
                ("backtracks".into(), backtracks),
                ("trajectories".into(), trajectories.len() as u64),
                ("steps".into(), steps.len() as u64),
            ]);
            Ok((
                vec![
                    Output::records("trajectories.jsonl", "trajectory", &trajectories),
                    Output::records("explore_steps.jsonl", "agent_step", &steps),
                    Output::records("explored_snapshots.jsonl", "snapshot", &snapshots),
                ],
                counts,
            ))
        })
    }

    fn annotate(&self) -> Result<StageOutcome, PipelineError> {
        let trajs_path = self.require_output("trajectories.jsonl", Stage::Explore)?;
        let files = self.env_files()?;
        let mut inputs = vec![trajs_path.clone()];
        inputs.extend(self.env_inputs(&files)?);
        let script = self.cfg.paths.stub_script.as_deref().map(|p| self.input(p));
        inputs.extend(script.clone());
        let digest = self.cfg.section_digest(
            "annotate",
            &serde_json::json!({"annotate": self.cfg.annotate, "extract": self.cfg.extract}),
        );
        self.run_with(Stage::Annotate, inputs, digest, || {
            let envs: HashMap<String, GuiEnvironment> = self
                .load_envs(&files)?
                .into_iter()
                .map(|e| (e.id().to_string(), e))
                .collect();
            let trajs: Vec<Trajectory> = read_records(&trajs_path, "trajectory")?;
            let client_cfg = self.cfg.annotate.client();
            let mut seen = HashSet::new();
            let mut reqs = Vec::new();
            let mut ids = Vec::new();
            for t in &trajs {
                let env = envs.get(&t.env_id).ok_or_else(|| {
                    PipelineError::Data(format!("trajectory for unknown environment `{}`", t.env_id))
                })?;
                for r in requests_for_trajectory(env, t, &self.cfg.extract) {
                    let doc = RequestDocument::new(&r.request, &client_cfg.prompt)
                        .map_err(|e| PipelineError::Config(e.to_string()))?;
                    if seen.insert(doc.request_id.clone()) {
                        ids.push(doc.request_id);
                        reqs.push(r);
                    }
                }
            }
            let client: StubClient = match &script {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(data(self.rel(p)))?;
                    StubClient::from_script(&text).map_err(|e| PipelineError::Config(e.to_string()))?
                }
                None => StubClient::echo(&self.cfg.annotate.echo_template),
            };
            let plain: Vec<_> = reqs.iter().map(|r| r.request.clone()).collect();
            let answers = annotate_all(&plain, &client as &dyn CompletionClient, &client_cfg);
            let mut ig = Vec::new();
            let mut notes = Vec::new();
            let mut retries = 0u64;
            for ((r, id), a) in reqs.iter().zip(ids).zip(answers) {
                let a = a.map_err(|e| match e {
                    AnnotateError::Template(m) | AnnotateError::Script(m) => PipelineError::Config(m),
                    other => PipelineError::Client(format!("request {id}: {other}")),
                })?;
                retries += a.retries as u64;
                ig.push(ig_record(r, &a.response));
                notes.push(AnnotationRecord {
                    request_id: id,
                    snapshot_id: r.snapshot_id.clone(),
                    acted_mark: r.request.acted_mark,
                    sub_instruction: a.response.sub_instruction,
                    retries: a.retries,
                });
            }
            let counts = Counts::from([
                ("requests".into(), reqs.len() as u64),
                ("records".into(), ig.len() as u64),
                ("retries".into(), retries),
            ]);
            Ok((
                vec![
                    Output::records("ig.jsonl", "grounding", &ig),
                    Output::records("annotations.jsonl", "annotation", &notes),
                ],
                counts,
            ))
        })
    }

    fn unify(&self) -> Result<StageOutcome, PipelineError> {
        let p = &self.cfg.paths;
        let adapter_paths: Vec<PathBuf> = p.adapters.iter().map(|a| self.input(a)).collect();
        let adapters: Vec<Adapter> = adapter_paths
            .iter()
            .map(|a| Adapter::load(a).map_err(|e| PipelineError::Config(format!("{}: {e}", self.rel(a)))))
            .collect::<Result<_, _>>()?;
        let step_paths: Vec<PathBuf> = p.source_steps.iter().map(|s| self.input(s)).collect();
        let aliases = p.aliases.as_deref().map(|a| self.input(a));
        let reg_path = self.output("reg.jsonl");
        let ig_path = self.output("ig.jsonl");

        let mut inputs = adapter_paths.clone();
        inputs.extend(adapters.iter().filter_map(|a| a.manifest.clone()));
        inputs.extend(aliases.clone());
        inputs.extend(step_paths.clone());
        let reg_path = reg_path.exists().then_some(reg_path);
        let ig_path = ig_path.exists().then_some(ig_path);
        inputs.extend(reg_path.clone());
        inputs.extend(ig_path.clone());
        let digest = self.cfg.section_digest("unify", &self.cfg.unify);

        self.run_with(Stage::Unify, inputs, digest, move || {
            let registry = match &aliases {
                Some(a) => {
                    let text = fs::read_to_string(a).map_err(data(self.rel(a)))?;
                    crate::action::AliasRegistry::from_toml_str(&text)
                        .map_err(|e| PipelineError::Config(format!("{}: {e}", self.rel(a))))?
                }
                None => crate::action::AliasRegistry::new(),
            };
            let mut unifier = Unifier::new(registry);
            for a in adapters {
                unifier
                    .add_adapter(a)
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
            }
            let mut sources: Vec<(String, SourceStep)> = Vec::new();
            for sp in &step_paths {
                let text = fs::read_to_string(sp).map_err(data(self.rel(sp)))?;
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let loc = format!("{}:{}", self.rel(sp), i + 1);
                    let s: SourceStep = serde_json::from_str(line).map_err(data(&loc))?;
                    sources.push((loc, s));
                }
            }
            let steps: Vec<AgentStep> = sources
                .par_iter()
                .map(|(loc, s)| unifier.unify_step(s).map_err(data(loc)))
                .collect::<Result<_, _>>()?;

            let u = &self.cfg.unify;
            let reg: Vec<GroundingRecord> = match &reg_path {
                Some(r) => read_records(r, "grounding")?,
                None => Vec::new(),
            };
            let ig: Vec<GroundingRecord> = match &ig_path {
                Some(r) => read_records(r, "grounding")?,
                None => Vec::new(),
            };
            let variants = variantize_all(&reg, self.cfg.seed, u.template_pool).map_err(data("reg.jsonl"))?;
            let pack = |seed_label: &str| derive_seed(self.cfg.seed, seed_label);
            let reg_packs = pack_conversations(&variants, u.pack_size, u.prefix_pool, pack("reg-pack"))
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let ig_packs = pack_conversations(&ig, u.pack_size, u.prefix_pool, pack("ig-pack"))
                .map_err(|e| PipelineError::Config(e.to_string()))?;

            let mut counts = Counts::from([
                ("source_steps".into(), sources.len() as u64),
                ("agent_steps".into(), steps.len() as u64),
                ("reg_variants".into(), variants.len() as u64),
                ("reg_packs".into(), reg_packs.len() as u64),
                ("ig_records".into(), ig.len() as u64),
                ("ig_packs".into(), ig_packs.len() as u64),
            ]);
            for k in VariantKind::ALL {
                let name = serde_json::to_value(k)
                    .expect("kind")
                    .as_str()
                    .unwrap()
                    .to_string();
                counts.insert(
                    format!("variant_{name}"),
                    variants.iter().filter(|v| v.kind == k).count() as u64,
                );
            }
            Ok((
                vec![
                    Output::records("agent_steps.jsonl", "agent_step", &steps),
                    Output::records("reg_packs.jsonl", "pack", &reg_packs),
                    Output::records("ig_packs.jsonl", "pack", &ig_packs),
                ],
                counts,
            ))
        })
    }

    fn evaluate(&self) -> Result<StageOutcome, PipelineError> {
        let given = self.cfg.paths.predictions.as_deref().map(|p| self.input(p));
        let src = match &given {
            Some(p) => p.clone(),
            None => self.require_output("agent_steps.jsonl", Stage::Unify)?,
        };
        let digest = self.cfg.section_digest(
            "evaluate",
            &serde_json::json!({"evaluate": self.cfg.evaluate, "given": given.is_some()}),
        );
        self.run_with(Stage::Evaluate, vec![src.clone()], digest, || {
            let text = fs::read_to_string(&src).map_err(data(self.rel(&src)))?;
            let mut steps: Vec<AgentStep> = decode(&self.rel(&src), "agent_step", &text)?;
            let mut outputs = Vec::new();
            if given.is_none() {
                self.cfg.evaluate.predictor.fill(&mut steps);
                outputs.push(Output::records("predictions.jsonl", "agent_step", &steps));
            }
            let report = evaluate_steps(&steps).map_err(data(self.rel(&src)))?;
            let counts = Counts::from([
                ("steps".into(), steps.len() as u64),
                ("groups".into(), report.groups.len() as u64),
            ]);
            outputs.push(Output::json("report.json", &report));
            outputs.push(Output::text("report.txt", report.table()));
            Ok((outputs, counts))
        })
    }
}
