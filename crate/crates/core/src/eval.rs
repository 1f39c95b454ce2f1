//! Grounding and agent-step metrics with per-dataset and macro aggregation.
//!
//! All coordinate metrics work on per-mille values and exact integer
//! arithmetic, so results never depend on float rounding at a boundary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Direction, UnifiedAction};
use crate::geom::{Box, Dims, PixelPoint, Point};
use crate::rng::{derive_seed, seeded};
use crate::unify::AgentStep;

/// Distance threshold for click correctness, in hundredths of screen width.
pub const CLICK_RADIUS_PERCENT: u64 = 14;

/// Inclusive on every edge.
pub fn point_in_box(pred: Point, gt: Box) -> bool {
    (gt.x1()..=gt.x2()).contains(&pred.x()) && (gt.y1()..=gt.y2()).contains(&pred.y())
}

/// Intersection over union of two boxes taken as continuous regions.
///
/// When the union has zero area the result is 1 for identical point boxes
/// and 0 otherwise.
pub fn iou(a: Box, b: Box) -> f64 {
    let span = |lo1: u16, hi1: u16, lo2: u16, hi2: u16| hi1.min(hi2).saturating_sub(lo1.max(lo2)) as u64;
    let inter = span(a.x1(), a.x2(), b.x1(), b.x2()) * span(a.y1(), a.y2(), b.y1(), b.y2());
    let union = a.area() as u64 + b.area() as u64 - inter;
    if union == 0 {
        let is_point = a.x1() == a.x2() && a.y1() == a.y2();
        return if a == b && is_point { 1.0 } else { 0.0 };
    }
    inter as f64 / union as f64
}

/// IoU between the unit cell around `pred` and the cells covered by `gt`,
/// on the integer grid. Positive exactly when [`point_in_box`] holds.
pub fn point_cell_iou(pred: Point, gt: Box) -> f64 {
    // doubled coordinates keep the half-cell offsets integral
    let cell = |lo: u16, hi: u16| (2 * lo as i64 - 1, 2 * hi as i64 + 1);
    let (px1, px2) = cell(pred.x(), pred.x());
    let (py1, py2) = cell(pred.y(), pred.y());
    let (gx1, gx2) = cell(gt.x1(), gt.x2());
    let (gy1, gy2) = cell(gt.y1(), gt.y2());
    let w = (px2.min(gx2) - px1.max(gx1)).max(0);
    let h = (py2.min(gy2) - py1.max(gy1)).max(0);
    let inter = w * h;
    let union = (px2 - px1) * (py2 - py1) + (gx2 - gx1) * (gy2 - gy1) - inter;
    inter as f64 / union as f64
}

/// Euclidean distance within 14% of screen width (inclusive), with both
/// points given per-mille on a screen of the given size.
pub fn click_correct(pred: Point, gt: Point, screen: Dims) -> bool {
    let w = screen.width as i128;
    let h = screen.height as i128;
    let dx = (pred.x() as i128 - gt.x() as i128) * w;
    let dy = (pred.y() as i128 - gt.y() as i128) * h;
    // distance in pixels is |(dx, dy)| / 1000
    let limit = CLICK_RADIUS_PERCENT as i128 * 10 * w;
    dx * dx + dy * dy <= limit * limit
}

/// Pixel-frame form of [`click_correct`].
pub fn click_correct_px(pred: PixelPoint, gt: PixelPoint, screen_width: u32) -> bool {
    let dx = pred.x as i128 - gt.x as i128;
    let dy = pred.y as i128 - gt.y as i128;
    (dx * dx + dy * dy) * 10_000 <= (CLICK_RADIUS_PERCENT as i128 * screen_width as i128).pow(2)
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

fn common_tokens(pred: &[String], gt: &[String]) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in gt {
        *counts.entry(t).or_default() += 1;
    }
    pred.iter()
        .filter(|t| match counts.get_mut(t.as_str()) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// Token-level F1 over lowercased whitespace tokens with multiset matching.
/// Two empty strings score 1.
pub fn token_f1(pred: &str, gt: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gt));
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    2.0 * common_tokens(&p, &g) as f64 / (p.len() + g.len()) as f64
}

/// F1 strictly above 0.5, decided in integers.
pub fn text_correct(pred: &str, gt: &str) -> bool {
    let (p, g) = (tokens(pred), tokens(gt));
    if p.is_empty() && g.is_empty() {
        return true;
    }
    // 2c / (|p| + |g|) > 1/2
    4 * common_tokens(&p, &g) > p.len() + g.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepScore {
    pub type_match: bool,
    /// Defined only when the ground truth carries coordinates.
    pub grounding_match: Option<bool>,
    pub success: bool,
}

fn corner_points(b: Box) -> [Point; 2] {
    let p = |x: u16, y: u16| Point::new(x.into(), y.into()).expect("box corners are in range");
    [p(b.x1(), b.y1()), p(b.x2(), b.y2())]
}

/// Score one prediction against its ground truth.
///
/// Each argument slot of the ground truth is checked on its own: points with
/// [`click_correct`], boxes (drag endpoints) with [`click_correct`] on both
/// corners, text with [`text_correct`], directions exactly. Slot-free
/// actions need only the name to match. Grounding looks at the coordinate
/// slots regardless of whether the action name matched.
pub fn step_success(pred: &UnifiedAction, gt: &UnifiedAction, screen: Dims) -> StepScore {
    let type_match = pred.name() == gt.name();

    let point_ok = gt
        .point()
        .map(|g| pred.point().is_some_and(|p| click_correct(p, g, screen)));
    let box_ok = gt.bbox().map(|g| {
        pred.bbox().is_some_and(|p| {
            let (pc, gc) = (corner_points(p), corner_points(g));
            click_correct(pc[0], gc[0], screen) && click_correct(pc[1], gc[1], screen)
        })
    });
    let grounding_match = match (point_ok, box_ok) {
        (None, None) => None,
        (a, b) => Some(a.unwrap_or(true) && b.unwrap_or(true)),
    };
    let text_ok = gt
        .text()
        .map(|g| pred.text().is_some_and(|p| text_correct(p, g)))
        .unwrap_or(true);
    let direction_ok = gt
        .direction()
        .map(|g: Direction| pred.direction() == Some(g))
        .unwrap_or(true);
    let args_ok = grounding_match.unwrap_or(true) && text_ok && direction_ok;

    StepScore {
        type_match,
        grounding_match,
        success: type_match && args_ok,
    }
}

/// Raw tallies; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub n: u64,
    pub type_correct: u64,
    pub grounding_n: u64,
    pub grounding_correct: u64,
    pub success: u64,
}

impl EvalCounts {
    pub fn add(&mut self, s: StepScore) {
        self.n += 1;
        self.type_correct += s.type_match as u64;
        if let Some(g) = s.grounding_match {
            self.grounding_n += 1;
            self.grounding_correct += g as u64;
        }
        self.success += s.success as u64;
    }

    pub fn merge(mut self, o: EvalCounts) -> EvalCounts {
        self.n += o.n;
        self.type_correct += o.type_correct;
        self.grounding_n += o.grounding_n;
        self.grounding_correct += o.grounding_correct;
        self.success += o.success;
        self
    }

    pub fn to_eval(&self) -> Result<AgentEval, EvalError> {
        if self.n == 0 {
            return Err(EvalError::Empty);
        }
        let n = self.n as f64;
        Ok(AgentEval {
            type_em: self.type_correct as f64 / n,
            grounding: (self.grounding_n > 0)
                .then(|| self.grounding_correct as f64 / self.grounding_n as f64),
            sr: self.success as f64 / n,
            n: self.n,
            grounding_n: self.grounding_n,
        })
    }
}

/// Type / Grounding / SR ratios. The grounding ratio's denominator is the
/// number of steps whose ground truth carries coordinates; it is absent
/// when there are none.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentEval {
    pub type_em: f64,
    pub grounding: Option<f64>,
    pub sr: f64,
    pub n: u64,
    pub grounding_n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("step {0} has no predicted action")]
    MissingPrediction(usize),
    #[error("step {0} has no screen dimensions")]
    MissingScreen(usize),
}

pub fn score_step(i: usize, step: &AgentStep) -> Result<StepScore, EvalError> {
    let pred = step
        .predicted_action
        .as_ref()
        .ok_or(EvalError::MissingPrediction(i))?;
    let screen = step.screen.ok_or(EvalError::MissingScreen(i))?;
    Ok(step_success(pred, &step.gt_action, screen))
}

pub fn count_steps(steps: &[AgentStep]) -> Result<EvalCounts, EvalError> {
    steps
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            score_step(i, s).map(|sc| {
                let mut c = EvalCounts::default();
                c.add(sc);
                c
            })
        })
        .try_reduce(EvalCounts::default, |a, b| Ok(a.merge(b)))
}

pub fn aggregate(steps: &[AgentStep]) -> Result<AgentEval, EvalError> {
    count_steps(steps)?.to_eval()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub splits: BTreeMap<String, AgentEval>,
    #[serde(rename = "macro")]
    pub macro_avg: AgentEval,
}

/// Unweighted mean over splits with at least one step. Grounding averages
/// over the splits where it is defined.
pub fn aggregate_macro(splits: &BTreeMap<String, AgentEval>) -> Result<MacroReport, EvalError> {
    let used: Vec<&AgentEval> = splits.values().filter(|e| e.n > 0).collect();
    if used.is_empty() {
        return Err(EvalError::Empty);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let type_em: Vec<f64> = used.iter().map(|e| e.type_em).collect();
    let sr: Vec<f64> = used.iter().map(|e| e.sr).collect();
    let grounding: Vec<f64> = used.iter().filter_map(|e| e.grounding).collect();
    Ok(MacroReport {
        splits: splits.clone(),
        macro_avg: AgentEval {
            type_em: mean(&type_em),
            grounding: (!grounding.is_empty()).then(|| mean(&grounding)),
            sr: mean(&sr),
            n: used.iter().map(|e| e.n).sum(),
            grounding_n: used.iter().map(|e| e.grounding_n).sum(),
        },
    })
}

/// A grounding model's output: a point, or a box scored by its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingPrediction {
    Point(Point),
    Box(Box),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingEval {
    pub accuracy: f64,
    /// Over box predictions only.
    pub mean_iou: Option<f64>,
    pub n: u64,
    pub n_box: u64,
}

pub fn grounding_eval(samples: &[(GroundingPrediction, Box)]) -> Result<GroundingEval, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut hits = 0u64;
    let mut iou_sum = 0.0;
    let mut n_box = 0u64;
    for (pred, gt) in samples {
        let p = match pred {
            GroundingPrediction::Point(p) => *p,
            GroundingPrediction::Box(b) => {
                n_box += 1;
                iou_sum += iou(*b, *gt);
                b.center()
            }
        };
        hits += point_in_box(p, *gt) as u64;
    }
    Ok(GroundingEval {
        accuracy: hits as f64 / samples.len() as f64,
        mean_iou: (n_box > 0).then(|| iou_sum / n_box as f64),
        n: samples.len() as u64,
        n_box,
    })
}

/// Bundled baseline predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Predictor {
    /// Copies the ground truth.
    GtEcho,
    /// Always clicks the same point.
    ConstantClick { point: Point },
    /// Uniform random basic action per step.
    RandomSeeded { seed: u64 },
}

impl Predictor {
    pub fn predict(&self, index: usize, step: &AgentStep) -> UnifiedAction {
        use rand::Rng as _;
        match self {
            Predictor::GtEcho => step.gt_action.clone(),
            Predictor::ConstantClick { point } => UnifiedAction::click(*point),
            Predictor::RandomSeeded { seed } => {
                let mut rng = seeded(derive_seed(*seed, &index.to_string()));
                match rng.gen_range(0..3) {
                    0 => UnifiedAction::click(
                        Point::new(rng.gen_range(0..=1000), rng.gen_range(0..=1000)).expect("in range"),
                    ),
                    1 => UnifiedAction::scroll(Direction::ALL[rng.gen_range(0..4)]),
                    _ => {
                        let words = ["open", "settings", "search", "hello", "ok"];
                        let n = rng.gen_range(1..=3);
                        let text: Vec<&str> = (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect();
                        UnifiedAction::type_text(text.join(" ")).expect("non-empty")
                    }
                }
            }
        }
    }

    pub fn fill(&self, steps: &mut [AgentStep]) {
        steps
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, s)| s.predicted_action = Some(self.predict(i, s)));
    }
}

/// Per-group evaluations with their macro average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub groups: BTreeMap<String, AgentEval>,
    #[serde(rename = "macro")]
    pub macro_avg: AgentEval,
    pub notes: Vec<String>,
}

pub const GROUNDING_NOTE: &str = "Grounding counts only steps whose ground-truth action carries coordinates";

/// Group key: dataset, plus `/split` when the step has one.
pub fn group_key(step: &AgentStep) -> String {
    let ds = step.dataset.as_deref().unwrap_or("unknown");
    match step.split {
        Some(s) => format!("{ds}/{}", serde_json::to_value(s).unwrap().as_str().unwrap()),
        None => ds.to_string(),
    }
}

pub fn evaluate_steps(steps: &[AgentStep]) -> Result<MetricReport, EvalError> {
    let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, s) in steps.iter().enumerate() {
        grouped.entry(group_key(s)).or_default().push(i);
    }
    let mut groups = BTreeMap::new();
    for (key, idx) in grouped {
        let counts = idx
            .par_iter()
            .map(|&i| {
                score_step(i, &steps[i]).map(|sc| {
                    let mut c = EvalCounts::default();
                    c.add(sc);
                    c
                })
            })
            .try_reduce(EvalCounts::default, |a, b| Ok(a.merge(b)))?;
        groups.insert(key, counts.to_eval()?);
    }
    let m = aggregate_macro(&groups)?;
    Ok(MetricReport {
        groups,
        macro_avg: m.macro_avg,
        notes: vec![GROUNDING_NOTE.to_string()],
    })
}

impl MetricReport {
    /// Plain-text table, one row per group plus the macro row.
    pub fn table(&self) -> String {
        let pct = |v: f64| format!("{:.2}", v * 100.0);
        let width = self.groups.keys().map(String::len).chain([7]).max().unwrap_or(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>9}  {:>6}  {:>6}",
            "dataset", "Type", "Grounding", "SR", "n"
        );
        let mut row = |name: &str, e: &AgentEval| {
            let g = e.grounding.map(pct).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{name:<width$}  {:>6}  {g:>9}  {:>6}  {:>6}",
                pct(e.type_em),
                pct(e.sr),
                e.n
            );
        };
        for (k, e) in &self.groups {
            row(k, e);
        }
        row("macro", &self.macro_avg);
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
