//! Page-level quality filters, the per-page element cap, and annotation lints.
//!
//! All filters are structural: they look at element geometry and page text,
//! never at screenshot pixels.

use std::collections::{BTreeMap, HashMap};

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::Dims;
use crate::rng::{derive_seed, seeded};
use crate::segment::GroundingRecord;
use crate::snapshot::{is_error_page, Element, ErrorPatterns, PageSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub max_elements_per_page: usize,
    /// Height fraction at the bottom of the page used by the clustering rule.
    pub bottom_band_fraction: f64,
    /// Reject when at least this fraction of element centers is in the band.
    pub clustered_reject_fraction: f64,
    /// Pages with fewer elements are treated as incompletely rendered.
    pub min_elements_for_render_check: usize,
    /// Pages wider than this are rejected (no horizontal segmentation).
    pub max_page_width: Option<u32>,
    pub seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_elements_per_page: 10,
            bottom_band_fraction: 0.15,
            clustered_reject_fraction: 0.80,
            min_elements_for_render_check: 3,
            max_page_width: Some(1920),
            seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.bottom_band_fraction > 0.0 && self.bottom_band_fraction < 1.0) {
            return Err("bottom_band_fraction must be in (0, 1)".into());
        }
        if !(self.clustered_reject_fraction > 0.0 && self.clustered_reject_fraction <= 1.0) {
            return Err("clustered_reject_fraction must be in (0, 1]".into());
        }
        if self.max_elements_per_page < 1 {
            return Err("max_elements_per_page must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ErrorPage,
    TooWide,
    IncompleteRender,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

/// What the page filter needs to know about a page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageFacts {
    pub page_size: Dims,
    pub error_page: bool,
}

impl PageFacts {
    pub fn from_snapshot(snapshot: &PageSnapshot, patterns: &ErrorPatterns) -> Self {
        Self {
            page_size: snapshot.page_size,
            error_page: is_error_page(snapshot, patterns),
        }
    }
}

pub fn filter_page(page: &PageFacts, elements: &[Element], cfg: &FilterConfig) -> Verdict {
    use RejectReason::*;
    if page.error_page {
        return Verdict::Reject(ErrorPage);
    }
    if cfg.max_page_width.is_some_and(|w| page.page_size.width > w) {
        return Verdict::Reject(TooWide);
    }
    if elements.len() < cfg.min_elements_for_render_check.max(1) {
        return Verdict::Reject(IncompleteRender);
    }
    let band_top = (1.0 - cfg.bottom_band_fraction) * page.page_size.height as f64;
    let in_band = elements
        .iter()
        .filter(|e| (e.bbox.y1 as f64 + e.bbox.y2 as f64) / 2.0 >= band_top)
        .count();
    if in_band as f64 >= cfg.clustered_reject_fraction * elements.len() as f64 {
        return Verdict::Reject(Clustered);
    }
    Verdict::Accept
}

/// Keep at most `max_elements_per_page` elements.
///
/// One element of every distinct role is taken first (roles in order of first
/// appearance), the rest is filled by uniform sampling without replacement.
/// The sample is seeded from `cfg.seed` and `page_key`; output keeps document
/// order.
pub fn cap_elements(elements: &[Element], cfg: &FilterConfig, page_key: &str) -> Vec<Element> {
    let cap = cfg.max_elements_per_page;
    if elements.len() <= cap {
        return elements.to_vec();
    }
    let mut rng = seeded(derive_seed(cfg.seed, page_key));

    let mut by_role: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, e) in elements.iter().enumerate() {
        match by_role.iter_mut().find(|(r, _)| *r == e.role) {
            Some((_, v)) => v.push(i),
            None => by_role.push((&e.role, vec![i])),
        }
    }
    let mut chosen = vec![false; elements.len()];
    for (_, members) in by_role.iter().take(cap) {
        chosen[members[rng.gen_range(0..members.len())]] = true;
    }
    let taken = by_role.len().min(cap);
    let rest: Vec<usize> = (0..elements.len()).filter(|i| !chosen[*i]).collect();
    for j in index::sample(&mut rng, rest.len(), cap - taken) {
        chosen[rest[j]] = true;
    }
    elements
        .iter()
        .zip(chosen)
        .filter(|&(_, c)| c)
        .map(|(e, _)| e.clone())
        .collect()
}

/// Page and element accounting for one filtering run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub pages_in: u64,
    pub pages_out: u64,
    pub rejected: BTreeMap<RejectReason, u64>,
    pub elements_in: u64,
    pub elements_out: u64,
}

impl FilterReport {
    pub fn record(&mut self, verdict: Verdict, elements_in: usize, elements_out: usize) {
        self.pages_in += 1;
        self.elements_in += elements_in as u64;
        match verdict {
            Verdict::Accept => {
                self.pages_out += 1;
                self.elements_out += elements_out as u64;
            }
            Verdict::Reject(r) => *self.rejected.entry(r).or_default() += 1,
        }
    }

    pub fn merge(mut self, other: FilterReport) -> FilterReport {
        self.pages_in += other.pages_in;
        self.pages_out += other.pages_out;
        self.elements_in += other.elements_in;
        self.elements_out += other.elements_out;
        for (r, n) in other.rejected {
            *self.rejected.entry(r).or_default() += n;
        }
        self
    }

    /// Rejection counts sum to the pages dropped.
    pub fn balanced(&self) -> bool {
        self.pages_out <= self.pages_in
            && self.rejected.values().sum::<u64>() == self.pages_in - self.pages_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LintKind {
    Duplicate,
    ZeroAreaBox,
    OutOfRangeBox,
    NoElementOverlap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub record: usize,
    pub kind: LintKind,
    pub detail: String,
}

/// A grounding record as found on disk, before coordinate validation.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct LintRecord {
    pub snapshot_id: String,
    pub window_index: u32,
    pub text: String,
    #[serde(default)]
    pub target_box: Option<[i64; 4]>,
}

impl From<&GroundingRecord> for LintRecord {
    fn from(r: &GroundingRecord) -> Self {
        Self {
            snapshot_id: r.snapshot_id.clone(),
            window_index: r.window_index,
            text: r.text.clone(),
            target_box: r.target_box.map(|b| b.coords().map(i64::from)),
        }
    }
}

fn normalized(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Flag annotation problems; never modifies or drops records.
///
/// `expressions` maps snapshot id to the referring expressions extracted
/// from it.
pub fn lint_annotations(
    records: &[LintRecord],
    expressions: &HashMap<String, Vec<String>>,
) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    let mut first_seen: HashMap<(&str, u32, String), usize> = HashMap::new();
    let vocab: HashMap<&str, std::collections::HashSet<String>> = expressions
        .iter()
        .map(|(k, v)| (k.as_str(), v.iter().flat_map(|e| tokens(e)).collect()))
        .collect();

    for (i, r) in records.iter().enumerate() {
        let key = (r.snapshot_id.as_str(), r.window_index, normalized(&r.text));
        if let Some(&first) = first_seen.get(&key) {
            findings.push(LintFinding {
                record: i,
                kind: LintKind::Duplicate,
                detail: format!("same instruction as record {first}"),
            });
        } else {
            first_seen.insert(key, i);
        }

        if let Some([x1, y1, x2, y2]) = r.target_box {
            let in_range = |v: i64| (0..=1000).contains(&v);
            if ![x1, y1, x2, y2].into_iter().all(in_range) || x1 > x2 || y1 > y2 {
                findings.push(LintFinding {
                    record: i,
                    kind: LintKind::OutOfRangeBox,
                    detail: format!("box [{x1}, {y1}, {x2}, {y2}] outside [0, 1000]"),
                });
            } else if x1 == x2 || y1 == y2 {
                findings.push(LintFinding {
                    record: i,
                    kind: LintKind::ZeroAreaBox,
                    detail: format!("box [{x1}, {y1}, {x2}, {y2}] has zero area"),
                });
            }
        }

        let empty = Default::default();
        let known = vocab.get(r.snapshot_id.as_str()).unwrap_or(&empty);
        if !tokens(&r.text).any(|t| known.contains(&t)) {
            findings.push(LintFinding {
                record: i,
                kind: LintKind::NoElementOverlap,
                detail: "instruction shares no token with any element on the page".into(),
            });
        }
    }
    findings
}
