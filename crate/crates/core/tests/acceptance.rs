//! Acceptance criteria, one PASS/FAIL line each. Runs with `harness = false`
//! and exits nonzero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng as _;

use groundkit::action::{serialize_action, ActionName, AliasRegistry, Dialect, UnifiedAction, Vocabulary};
use groundkit::config::PipelineConfig;
use groundkit::eval::{
    aggregate, aggregate_macro, click_correct, click_correct_px, iou, point_in_box, text_correct, token_f1,
    AgentEval,
};
use groundkit::explore::{explore, ExplorationPolicy, PolicyKind};
use groundkit::filter::{cap_elements, filter_page, FilterConfig, FilterReport, PageFacts, Verdict};
use groundkit::geom::{Box, Dims, PixelBox, PixelPoint, Point};
use groundkit::pipeline::Runner;
use groundkit::rng::{seeded, Rng};
use groundkit::segment::{emit_reg_records, plan_windows, to_page_pixels, SegmentConfig, DEFAULT_WINDOW};
use groundkit::snapshot::{extract_elements, Element, ErrorPatterns, ExtractConfig, NodePath};
use groundkit::synth;
use groundkit::unify::{pack_conversations, Adapter, AgentStep, SourceStep, Split, Unifier};

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail
                .push_str(&format!("; over the {} s limit", limit.as_secs()));
        }
    }
    o.detail.push_str(&format!(" ({:.2} s)", took.as_secs_f64()));
    o
}

fn c1_round_trip() -> Outcome {
    let mut rng = seeded(1);
    let mut vocab = Vocabulary::builtin();
    vocab
        .extend_from_manifest(
            &fs::read_to_string(common::fixtures().join("adapters/desktop_actions.toml")).unwrap(),
        )
        .unwrap();
    let mut failures = 0;
    let n = 100_000;
    for i in 0..n {
        let a = synth::random_action(&mut rng, &vocab);
        let dialect = Dialect::ALL[i % 2];
        let text = serialize_action(&a, dialect);
        match vocab.parse(&text, dialect) {
            Ok(b) if b == a && serialize_action(&b, dialect) == text => {}
            _ => failures += 1,
        }
    }
    outcome(failures == 0, format!("{n} actions, {failures} failures"))
}

fn c2_alias_compression() -> Outcome {
    let src = fs::read_to_string(common::fixtures().join("aliases/compression.toml")).unwrap();
    let reg = AliasRegistry::from_toml_str(&src).unwrap();
    let keys: Vec<(String, String)> = reg
        .entries()
        .map(|(d, r, _)| (d.to_string(), r.to_string()))
        .collect();
    let canon: BTreeSet<String> = keys
        .iter()
        .map(|(d, r)| reg.canonicalize(r, d).unwrap().as_str().to_string())
        .collect();
    outcome(
        keys.len() == 17 && canon.len() == 10,
        format!("{} raw names -> {} action types", keys.len(), canon.len()),
    )
}

/// Per-mille box as a bitmap of covered unit cells, one row of 16 words per
/// grid row.
fn raster(b: Box) -> Vec<[u64; 16]> {
    let mut rows = vec![[0u64; 16]; 1000];
    for row in rows.iter_mut().take(b.y2() as usize).skip(b.y1() as usize) {
        for x in b.x1() as usize..b.x2() as usize {
            row[x / 64] |= 1 << (x % 64);
        }
    }
    rows
}

fn raster_iou(a: Box, b: Box) -> f64 {
    let (ra, rb) = (raster(a), raster(b));
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in ra.iter().zip(&rb) {
        for (u, v) in x.iter().zip(y) {
            inter += (u & v).count_ones() as u64;
            union += (u | v).count_ones() as u64;
        }
    }
    if union == 0 {
        // degenerate boxes: only an identical point box overlaps itself
        let point = a.x1() == a.x2() && a.y1() == a.y2();
        return if a == b && point { 1.0 } else { 0.0 };
    }
    inter as f64 / union as f64
}

fn random_box(rng: &mut Rng, max_side: u16) -> Box {
    let x1 = rng.gen_range(0..=1000u16);
    let y1 = rng.gen_range(0..=1000u16);
    let x2 = (x1 + rng.gen_range(0..=max_side)).min(1000);
    let y2 = (y1 + rng.gen_range(0..=max_side)).min(1000);
    Box::new(x1.into(), y1.into(), x2.into(), y2.into()).unwrap()
}

fn random_point(rng: &mut Rng) -> Point {
    Point::new(rng.gen_range(0..=1000), rng.gen_range(0..=1000)).unwrap()
}

fn c3_metric_oracles() -> Outcome {
    let mut rng = seeded(3);
    let mut worst = 0f64;
    for i in 0..1000 {
        let a = random_box(&mut rng, if i % 2 == 0 { 1000 } else { 60 });
        let b = if i % 10 == 0 {
            a
        } else {
            random_box(&mut rng, if i % 2 == 0 { 1000 } else { 60 })
        };
        worst = worst.max((iou(a, b) - raster_iou(a, b)).abs());
    }

    let mut pib_bad = 0;
    for _ in 0..10_000 {
        let b = random_box(&mut rng, 300);
        let p = if rng.gen_bool(0.5) {
            Point::new(
                rng.gen_range(b.x1() as i64..=b.x2() as i64 + 1).min(1000),
                rng.gen_range(b.y1() as i64..=b.y2() as i64 + 1).min(1000),
            )
            .unwrap()
        } else {
            random_point(&mut rng)
        };
        let covered = (b.x1()..=b.x2()).any(|x| x == p.x()) && (b.y1()..=b.y2()).any(|y| y == p.y());
        pib_bad += (covered != point_in_box(p, b)) as u32;
    }

    let mut click_bad = 0;
    let screens = [
        (1920, 1080),
        (1080, 2340),
        (1366, 768),
        (2560, 1440),
        (1000, 1000),
    ];
    for i in 0..10_000 {
        let (w, h) = screens[i % screens.len()];
        let gt = random_point(&mut rng);
        let pred = if i % 3 == 0 {
            // land near the 14% circle
            let r = 140.0 * rng.gen_range(0.9..1.1f64);
            let t = rng.gen_range(0.0..std::f64::consts::TAU);
            let x = (gt.x() as f64 + r * t.cos()).round().clamp(0.0, 1000.0);
            let y = (gt.y() as f64 + r * t.sin() * w as f64 / h as f64)
                .round()
                .clamp(0.0, 1000.0);
            Point::new(x as i64, y as i64).unwrap()
        } else {
            random_point(&mut rng)
        };
        // pixel distance compared with 14% of the width, in floating point;
        // ties resolved by exact comparison of squared thousandths of a pixel
        let dx = (pred.x() as f64 - gt.x() as f64) * w as f64 / 1000.0;
        let dy = (pred.y() as f64 - gt.y() as f64) * h as f64 / 1000.0;
        let d = dx.hypot(dy);
        let r = 0.14 * w as f64;
        let expected = if (d - r).abs() > 1e-9 * r {
            d <= r
        } else {
            let ex = (pred.x() as i64 - gt.x() as i64) * w as i64;
            let ey = (pred.y() as i64 - gt.y() as i64) * h as i64;
            ex * ex + ey * ey <= (140 * w as i64).pow(2)
        };
        click_bad += (expected != click_correct(pred, gt, Dims::new(w, h))) as u32;

        let (px, gx) = (
            PixelPoint {
                x: rng.gen_range(0..w),
                y: rng.gen_range(0..h),
            },
            PixelPoint {
                x: rng.gen_range(0..w),
                y: rng.gen_range(0..h),
            },
        );
        let d = (px.x as f64 - gx.x as f64).hypot(px.y as f64 - gx.y as f64);
        let expected = if (d - r).abs() > 1e-9 * r {
            d <= r
        } else {
            let (ex, ey) = (px.x as i64 - gx.x as i64, px.y as i64 - gx.y as i64);
            (ex * ex + ey * ey) * 10_000 <= (14 * w as i64).pow(2)
        };
        click_bad += (expected != click_correct_px(px, gx, w)) as u32;
    }
    outcome(
        worst <= 1e-9 && pib_bad == 0 && click_bad == 0,
        format!(
            "iou max |diff| {worst:.1e} on 1000 pairs; point_in_box {pib_bad} and click_correct {click_bad} disagreements on 10000 cases"
        ),
    )
}

/// Precision/recall form of token F1 on lowercased whitespace tokens.
fn oracle_f1(pred: &str, gt: &str) -> f64 {
    let count = |s: &str| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for t in s.split_whitespace() {
            *m.entry(t.to_lowercase()).or_default() += 1;
        }
        m
    };
    let (p, g) = (count(pred), count(gt));
    let (np, ng): (usize, usize) = (p.values().sum(), g.values().sum());
    if np == 0 && ng == 0 {
        return 1.0;
    }
    let common: usize = p.iter().map(|(t, c)| (*c).min(*g.get(t).unwrap_or(&0))).sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / np as f64;
    let recall = common as f64 / ng as f64;
    2.0 * precision * recall / (precision + recall)
}

fn c4_f1() -> Outcome {
    let f = token_f1("open settings", "open the settings");
    let worked = (f - 0.8).abs() < 1e-12 && text_correct("open settings", "open the settings");
    let words = [
        "open", "the", "settings", "Open", "menu", "a", "wifi", "tab", "THE",
    ];
    let mut rng = seeded(4);
    let mut bad = 0;
    for _ in 0..1000 {
        let phrase = |rng: &mut Rng| {
            let n = rng.gen_range(0..6);
            (0..n)
                .map(|_| *words.choose(rng).unwrap())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let (p, g) = (phrase(&mut rng), phrase(&mut rng));
        let o = oracle_f1(&p, &g);
        let correct = o > 0.5 && (o - 0.5).abs() > 1e-12;
        if (token_f1(&p, &g) - o).abs() > 1e-12 || text_correct(&p, &g) != correct {
            bad += 1;
        }
    }
    outcome(
        worked && bad == 0,
        format!("worked example F1 {f:.3} correct={worked}; {bad} disagreements in 1000 random cases"),
    )
}

fn c5_filter_cap() -> Outcome {
    let mut rng = seeded(5);
    let cfg = FilterConfig {
        max_elements_per_page: 10,
        ..FilterConfig::default()
    };
    let patterns = ErrorPatterns::default();
    let mut report = FilterReport::default();
    let (mut over, mut kept_elements) = (0, 0u64);
    for i in 0..200 {
        let page = synth::random_page(&mut rng, &format!("p{i:03}"));
        let els = extract_elements(&page, &ExtractConfig::default());
        let verdict = filter_page(&PageFacts::from_snapshot(&page, &patterns), &els, &cfg);
        let kept = match verdict {
            Verdict::Accept => cap_elements(&els, &cfg, &page.id).len(),
            Verdict::Reject(_) => 0,
        };
        over += (kept > 10) as u32;
        kept_elements += kept as u64;
        report.record(verdict, els.len(), kept);
    }
    let rejected: u64 = report.rejected.values().sum();
    let balanced = report.balanced()
        && report.pages_in == 200
        && report.pages_out + rejected == 200
        && report.elements_out == kept_elements;
    outcome(
        over == 0 && balanced,
        format!(
            "{} of 200 pages kept, {over} over the cap, {rejected} rejected, accounting balanced={balanced}",
            report.pages_out
        ),
    )
}

fn c6_segmenter() -> Outcome {
    let mut rng = seeded(6);
    let cfg = SegmentConfig::default();
    let (mut records, mut worst, mut gaps, mut bad_size) = (0usize, 0i64, 0, 0);
    for i in 0..500 {
        let height = match i % 4 {
            0 => rng.gen_range(200..=1080),
            _ => rng.gen_range(1081..=9000),
        };
        let page = Dims::new(1920, height);
        let x1 = rng.gen_range(0..1900);
        let y1 = rng.gen_range(0..height - 1);
        let bbox = PixelBox::new(
            x1,
            y1,
            (x1 + rng.gen_range(1..=600)).min(1920),
            (y1 + rng.gen_range(1..=1500)).min(height),
        );
        let el = Element {
            node_path: NodePath(vec![0]),
            role: "button".into(),
            referring_expression: "go".into(),
            bbox,
        };
        let windows = plan_windows(page, DEFAULT_WINDOW);
        for r in emit_reg_records("p", std::slice::from_ref(&el), &windows, &cfg) {
            let w = &windows[r.window_index as usize];
            let clipped = bbox.intersect(&w.frame()).unwrap();
            let back = to_page_pixels(r.target_box.unwrap(), w);
            for (a, b) in [
                (back.x1, clipped.x1),
                (back.y1, clipped.y1),
                (back.x2, clipped.x2),
                (back.y2, clipped.y2),
            ] {
                worst = worst.max((a as i64 - b as i64).abs());
            }
            records += 1;
        }
        let mut covered = vec![false; height as usize];
        for w in &windows {
            for row in w.origin_y..(w.origin_y + w.size.height).min(height) {
                covered[row as usize] = true;
            }
        }
        gaps += covered.iter().filter(|c| !**c).count();
        let sizes_ok = if height <= 1080 {
            windows.len() == 1 && windows[0].size == Dims::new(1920, height)
        } else {
            windows
                .iter()
                .all(|w| w.size == DEFAULT_WINDOW && w.origin_y + 1080 <= height)
        };
        bad_size += (!sizes_ok) as u32;
    }
    outcome(
        worst <= 1 && gaps == 0 && bad_size == 0 && records > 0,
        format!("{records} records, max inverse error {worst} px, {gaps} uncovered rows, {bad_size} bad window plans"),
    )
}

fn bfs_reachable(n: usize, edges: &[(usize, usize)]) -> BTreeSet<String> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    let mut seen = vec![false; n];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(s) = q.pop_front() {
        for &t in &adj[s] {
            if !seen[t] {
                seen[t] = true;
                q.push_back(t);
            }
        }
    }
    (0..n).filter(|&i| seen[i]).map(|i| format!("s{i}")).collect()
}

/// Digest of random-walk trajectories over a fixed generated graph, recorded
/// from a verified run. A different machine producing other bytes fails here.
const WALK_DIGEST: &str = "8e4b9355e2f8df09b771cdf7b9704cd7eccd130f1485c895d2cdf237d3b0c74a";

fn walk_bytes() -> Vec<u8> {
    let mut rng = seeded(77);
    let edges = synth::random_edges(&mut rng, 40, 3);
    let env = synth::graph_env("walk", 40, &edges);
    let mut bytes = Vec::new();
    for seed in 0..5 {
        let policy = ExplorationPolicy {
            kind: PolicyKind::RandomWalk,
            max_steps: 200,
            seed,
        };
        let ex = explore(&env, &policy).unwrap();
        bytes.extend(serde_json::to_vec(&ex.trajectories).unwrap());
        bytes.push(b'\n');
    }
    bytes
}

fn c7_explorer() -> Outcome {
    let mut rng = seeded(7);
    let mut mismatched = 0;
    for g in 0..50 {
        let n = rng.gen_range(1..=200);
        let edges = synth::random_edges(&mut rng, n, 3);
        let env = synth::graph_env(&format!("g{g}"), n, &edges);
        let policy = ExplorationPolicy {
            kind: PolicyKind::Dfs,
            max_steps: edges.len() + n + 1,
            seed: 0,
        };
        let visited: BTreeSet<String> = explore(&env, &policy).unwrap().visited.into_iter().collect();
        mismatched += (visited != bfs_reachable(n, &edges)) as u32;
    }
    let (a, b) = (walk_bytes(), walk_bytes());
    let walk_steps = String::from_utf8_lossy(&a).matches("\"screenshot_ref\"").count();
    let digest = groundkit::records::sha256_hex(&a);
    if std::env::var_os("PRINT_WALK_DIGEST").is_some() {
        eprintln!("walk digest {digest}");
    }
    let same_run = a == b;
    let same_machine = digest == WALK_DIGEST;
    outcome(
        mismatched == 0 && same_run && same_machine && walk_steps > 0,
        format!(
            "{mismatched} of 50 graphs differ from BFS; {walk_steps} walk steps identical across runs={same_run}, match recorded digest={same_machine} ({})",
            &digest[..16]
        ),
    )
}

fn c8_unifier() -> Outcome {
    let dir = common::fixtures().join("adapters");
    let mut u = Unifier::default();
    for f in ["web.toml", "mobile.toml", "desktop.toml"] {
        u.add_adapter(Adapter::load(&dir.join(f)).unwrap()).unwrap();
    }
    let mut shapes = Vec::new();
    for f in ["web_steps.jsonl", "mobile_steps.jsonl", "desktop_steps.jsonl"] {
        let names: BTreeSet<String> = fs::read_to_string(dir.join(f))
            .unwrap()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let s: SourceStep = serde_json::from_str(l).unwrap();
                u.unify_step(&s).unwrap().gt_action.name().to_string()
            })
            .collect();
        let basic = names
            .iter()
            .filter(|n| ActionName::new(n.as_str()).unwrap().is_basic())
            .count();
        shapes.push((basic, names.len() - basic));
    }
    let records: Vec<u32> = (0..10_007).collect();
    let packs = pack_conversations(&records, 15, 100, 8).unwrap();
    let flat: Vec<u32> = packs.iter().flat_map(|p| p.samples.iter().copied()).collect();
    let sizes_ok = packs
        .iter()
        .all(|p| !p.samples.is_empty() && p.samples.len() <= 15);
    let pass = shapes == [(3, 2), (3, 5), (3, 6)] && packs.len() == 668 && flat == records && sizes_ok;
    outcome(
        pass,
        format!(
            "family shapes {shapes:?}; 10007 records -> {} packs, order preserved={}",
            packs.len(),
            flat == records
        ),
    )
}

fn random_step(rng: &mut Rng, vocab: &Vocabulary) -> AgentStep {
    let gt = synth::random_action(rng, vocab);
    let pred = match rng.gen_range(0..4) {
        0 => gt.clone(),
        1 => match gt.point() {
            Some(p) => UnifiedAction::click(
                Point::new(
                    (p.x() as i64 + rng.gen_range(-200..=200)).clamp(0, 1000),
                    (p.y() as i64 + rng.gen_range(-200..=200)).clamp(0, 1000),
                )
                .unwrap(),
            ),
            None => gt.clone(),
        },
        _ => synth::random_action(rng, vocab),
    };
    AgentStep {
        dataset: Some("random".into()),
        split: Some(Split::Test),
        task: "t".into(),
        screenshot_ref: "s".into(),
        screen: Some(Dims::new(rng.gen_range(320..=2560), rng.gen_range(320..=2560))),
        history: Vec::new(),
        thought: None,
        gt_action: gt,
        predicted_action: Some(pred),
    }
}

fn c9_sr_and_macro() -> Outcome {
    let mut rng = seeded(9);
    let vocab = Vocabulary::builtin();
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=12);
        let steps: Vec<AgentStep> = (0..n).map(|_| random_step(&mut rng, &vocab)).collect();
        let e = aggregate(&steps).unwrap();
        violations += (e.sr > e.type_em) as u32;
    }
    let splits: BTreeMap<String, AgentEval> = [0.2, 0.4, 0.6, 0.8]
        .iter()
        .enumerate()
        .map(|(i, &sr)| {
            (
                format!("split{i}"),
                AgentEval {
                    type_em: 1.0,
                    grounding: None,
                    sr,
                    n: 10,
                    grounding_n: 0,
                },
            )
        })
        .collect();
    let m = aggregate_macro(&splits).unwrap().macro_avg.sr;
    outcome(
        violations == 0 && m == 0.5,
        format!("{violations} SR > Type violations in 10000 sets; macro SR {m}"),
    )
}

fn c10_pipeline() -> Outcome {
    let dir = common::fixture_copy();
    let corpus = dir.path().join("corpus");
    let (cfg, base) = PipelineConfig::load(&corpus.join("pipeline.toml"), &[]).unwrap();
    let run = Runner::new(cfg, base).run_pipeline();
    let golden = fs::read(common::fixtures().join("corpus/golden_manifest.json")).unwrap();
    match run {
        Ok(_) => {
            let got = fs::read(corpus.join("out/manifest.json")).unwrap();
            let n: usize = fs::read_dir(corpus.join("snapshots")).unwrap().count();
            outcome(
                got == golden,
                format!(
                    "{n} snapshots, manifest matches golden byte-for-byte={}",
                    got == golden
                ),
            )
        }
        Err(e) => outcome(false, format!("pipeline failed: {e}")),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--quiet`; only a filter
    // argument is honoured
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: Vec<Criterion> = vec![
        ("1 action round-trip", secs(10), c1_round_trip),
        ("2 alias compression", None, c2_alias_compression),
        ("3 metric oracles", secs(30), c3_metric_oracles),
        ("4 F1 rule", secs(5), c4_f1),
        ("5 filter cap", None, c5_filter_cap),
        ("6 segmenter geometry", None, c6_segmenter),
        ("7 explorer", None, c7_explorer),
        ("8 unifier", None, c8_unifier),
        ("9 SR <= Type and macro", None, c9_sr_and_macro),
        ("10 end-to-end determinism", secs(60), c10_pipeline),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        if filter.as_deref().is_some_and(|p| !name.contains(p)) {
            continue;
        }
        let o = timed(limit, f);
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += (!o.pass) as u32;
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
