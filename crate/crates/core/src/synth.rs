//! Seeded generators for fixture corpora and randomized tests: web page
//! snapshots, GUI state graphs and unified actions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde_json::{json, Value};

use crate::action::{ActionName, ActionText, Direction, Slot, UnifiedAction, Vocabulary};
use crate::explore::{GuiEnvironment, TransitionAction, ENV_SCHEMA, ENV_VERSION};
use crate::geom::{Box, Point};
use crate::records::RecordError;
use crate::rng::{derive_seed, seeded, Rng};
use crate::snapshot::{load_snapshot, NodePath, PageSnapshot};

const WORDS: &[&str] = &[
    "home", "search", "cart", "profile", "settings", "news", "sign", "in", "out", "next", "previous",
    "download", "share", "menu", "help", "contact", "about", "pricing", "blog", "more", "save", "open",
    "close", "submit", "filter", "sort", "view", "all", "account",
];

const TEXT_CHARS: &[char] = &[
    'a', 'b', 'z', 'Q', '0', '7', ' ', ' ', ']', '[', '\\', '<', '>', '(', ')', ',', '|', '"', '\'', ':',
    '\n', '\t', 'é', 'ß', '中', '文', '😀', '{', '}', '#',
];

fn phrase(rng: &mut Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n)
        .map(|_| *WORDS.choose(rng).expect("non-empty"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_text(rng: &mut Rng) -> ActionText {
    let len = rng.gen_range(1..=24);
    let s: String = (0..len)
        .map(|_| *TEXT_CHARS.choose(rng).expect("non-empty"))
        .collect();
    ActionText::new(s).expect("non-empty")
}

fn random_point(rng: &mut Rng) -> Point {
    Point::new(rng.gen_range(0..=1000), rng.gen_range(0..=1000)).expect("in range")
}

fn random_box(rng: &mut Rng) -> Box {
    let (a, b) = (rng.gen_range(0..=1000), rng.gen_range(0..=1000));
    let (c, d) = (rng.gen_range(0..=1000), rng.gen_range(0..=1000));
    Box::new(a.min(b), c.min(d), a.max(b), c.max(d)).expect("ordered")
}

/// Any action the vocabulary accepts, with adversarial text content.
pub fn random_action(rng: &mut Rng, vocab: &Vocabulary) -> UnifiedAction {
    let mut names: Vec<String> = vec!["CLICK".into(), "TYPE".into(), "SCROLL".into()];
    names.extend(vocab.custom_names().map(|n| n.to_string()));
    let name = ActionName::new(names.choose(rng).expect("non-empty").clone()).expect("canonical");
    let slots = vocab.slots(name.as_str()).expect("declared");
    let has = |s| slots.contains(&s);
    let point = has(Slot::Point).then(|| random_point(rng));
    let bbox = has(Slot::Box).then(|| random_box(rng));
    let text = has(Slot::Text).then(|| random_text(rng));
    let direction = has(Slot::Direction).then(|| *Direction::ALL.choose(rng).expect("non-empty"));
    UnifiedAction::from_parts(&name, point, bbox, text, direction).expect("slots match")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PageShape {
    Normal,
    Error,
    Wide,
    Clustered,
    Sparse,
    Dense,
}

/// A web page snapshot document in the flat node-table form.
///
/// Most pages are ordinary; a few are error pages, over-wide pages,
/// bottom-clustered pages (incomplete renders), nearly empty pages or
/// pages with far more elements than the per-page cap.
pub fn random_page_doc(rng: &mut Rng, id: &str) -> Value {
    let shape = match rng.gen_range(0..100) {
        0..=69 => PageShape::Normal,
        70..=74 => PageShape::Error,
        75..=79 => PageShape::Wide,
        80..=86 => PageShape::Clustered,
        87..=91 => PageShape::Sparse,
        _ => PageShape::Dense,
    };
    let width: i64 = match shape {
        PageShape::Wide => 2560,
        _ => *[1920i64, 1920, 1920, 1440, 1280].choose(rng).expect("non-empty"),
    };
    let height: i64 = match rng.gen_range(0..10) {
        0 => rng.gen_range(600..1080),
        _ => rng.gen_range(1080..6500),
    };
    let viewport_h = height.min(1080);
    let n_leaves: usize = match shape {
        PageShape::Sparse => rng.gen_range(0..=2),
        PageShape::Dense => rng.gen_range(25..60),
        _ => rng.gen_range(4..24),
    };

    let mut nodes = vec![json!({
        "id": 0, "role": "document", "bbox": [0, 0, width, height], "children": []
    })];
    let n_sections = rng.gen_range(1..=4usize);
    for s in 0..n_sections {
        let y1 = height * s as i64 / n_sections as i64;
        let y2 = height * (s as i64 + 1) / n_sections as i64;
        nodes.push(json!({
            "id": nodes.len(), "role": "section", "bbox": [0, y1, width, y2], "children": []
        }));
        nodes[0]["children"].as_array_mut().unwrap().push(json!(s + 1));
    }
    for _ in 0..n_leaves {
        let section = rng.gen_range(0..n_sections);
        let (sy1, sy2) = {
            let b = &nodes[section + 1]["bbox"];
            (b[1].as_i64().unwrap(), b[3].as_i64().unwrap())
        };
        let w = rng.gen_range(20..400).min(width);
        let h = rng.gen_range(12..80);
        let x1 = rng.gen_range(0..=width - w);
        let y1 = match shape {
            PageShape::Clustered if rng.gen_bool(0.9) => {
                let band_top = height - height * 15 / 100;
                rng.gen_range(band_top..height)
            }
            _ => rng.gen_range(sy1..sy2.max(sy1 + 1)),
        };
        let y2 = (y1 + h).min(height);
        let role = *[
            "button",
            "button",
            "link",
            "link",
            "link",
            "textbox",
            "searchbox",
            "checkbox",
            "tab",
            "menuitem",
            "svg",
            "svg",
            "img",
            "heading",
            "paragraph",
        ]
        .choose(rng)
        .expect("non-empty");
        let mut node = json!({
            "id": nodes.len(), "role": role, "bbox": [x1, y1, x1 + w, y2]
        });
        match rng.gen_range(0..10) {
            0..=5 => node["name"] = json!(phrase(rng, 3)),
            6 => node["text"] = json!(format!("  {}  ", phrase(rng, 4))),
            7 => node["attributes"] = json!({"title": phrase(rng, 2)}),
            8 => node["attributes"] = json!({"aria-label": phrase(rng, 2)}),
            _ => {}
        }
        if rng.gen_bool(0.08) {
            node["visible"] = json!(false);
        }
        if rng.gen_bool(0.03) {
            // zero-height element
            node["bbox"] = json!([x1, y1, x1 + w, y1]);
        }
        let leaf = nodes.len();
        nodes.push(node);
        nodes[section + 1]["children"]
            .as_array_mut()
            .unwrap()
            .push(json!(leaf));
    }

    let title = match shape {
        PageShape::Error => *["404 Not Found", "503 Service Unavailable", "Error 500"]
            .choose(rng)
            .unwrap(),
        _ => *["Welcome", "Latest news", "Shop", "Documentation", "Account"]
            .choose(rng)
            .unwrap(),
    };
    json!({
        "id": id,
        "platform": "web",
        "page_size": [width, height],
        "viewport": [width.min(1920), viewport_h],
        "title": title,
        "body_text": phrase(rng, 12),
        "root": 0,
        "nodes": nodes,
    })
}

pub fn random_page(rng: &mut Rng, id: &str) -> PageSnapshot {
    load_snapshot(random_page_doc(rng, id).to_string().as_bytes()).expect("generated pages are valid")
}

/// A phone-sized snapshot with `n` stacked buttons.
pub fn column_doc(id: &str, n: usize) -> Value {
    let mut nodes = vec![json!({
        "id": 0, "role": "window", "bbox": [0, 0, 1080, 2340],
        "children": (1..=n).collect::<Vec<_>>()
    })];
    for i in 1..=n {
        let y = 200 + (i as i64 - 1) * 2000 / n.max(1) as i64;
        nodes.push(json!({
            "id": i, "role": "button", "name": format!("option {i}"),
            "bbox": [60, y, 1020, y + (2000 / n.max(1) as i64).min(160) - 8]
        }));
    }
    json!({
        "id": id, "platform": "android", "page_size": [1080, 2340],
        "viewport": [1080, 2340], "title": id, "root": 0, "nodes": nodes
    })
}

/// Random state graph: every state gets up to `max_out` transitions to
/// uniformly chosen states, self-loops included.
pub fn random_edges(rng: &mut Rng, n_states: usize, max_out: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for s in 0..n_states {
        for _ in 0..rng.gen_range(0..=max_out) {
            edges.push((s, rng.gen_range(0..n_states)));
        }
    }
    edges
}

/// Build an environment over states `s0..` from an edge list. Each edge
/// from a state uses that state's next button, so edges never collide.
pub fn graph_env(id: &str, n_states: usize, edges: &[(usize, usize)]) -> GuiEnvironment {
    let mut fanout = vec![0usize; n_states];
    for (a, _) in edges {
        fanout[*a] += 1;
    }
    let states = (0..n_states)
        .map(|i| {
            let sid = format!("s{i}");
            let doc = column_doc(&format!("{id}-{sid}"), fanout[i].max(1));
            (sid, load_snapshot(doc.to_string().as_bytes()).expect("valid"))
        })
        .collect();
    let mut used = vec![0usize; n_states];
    let transitions = edges
        .iter()
        .map(|&(a, b)| {
            let e = used[a];
            used[a] += 1;
            (
                format!("s{a}"),
                NodePath(vec![e]),
                TransitionAction::Click,
                format!("s{b}"),
            )
        })
        .collect();
    GuiEnvironment::new(
        id.into(),
        "explore the app".into(),
        "s0".into(),
        states,
        transitions,
        &Vocabulary::builtin(),
    )
    .expect("generated graphs are valid")
}

const TASKS: &[&str] = &[
    "Turn on dark mode",
    "Set an alarm for 7:30",
    "Add milk to the shopping list",
    "Share the latest photo",
    "Find the battery settings",
];

/// An environment file document with inline snapshots and mixed actions.
pub fn random_env_doc(rng: &mut Rng, id: &str, n_states: usize) -> Value {
    // a spine through every state keeps the whole graph reachable
    let mut edges: Vec<(usize, usize)> = (1..n_states).map(|i| (rng.gen_range(0..i), i)).collect();
    edges.extend(random_edges(rng, n_states, 2));
    edges.sort_by_key(|e| e.0);
    let mut fanout = vec![0usize; n_states];
    for (a, _) in &edges {
        fanout[*a] += 1;
    }
    let states: Vec<Value> = (0..n_states)
        .map(|i| json!({"id": format!("s{i}"), "snapshot": column_doc(&format!("{id}-s{i}"), fanout[i].max(1))}))
        .collect();
    let mut used = vec![0usize; n_states];
    let transitions: Vec<Value> = edges
        .iter()
        .map(|&(a, b)| {
            let e = used[a];
            used[a] += 1;
            let action = match rng.gen_range(0..10) {
                0..=5 => json!({"kind": "CLICK"}),
                6 => json!({"kind": "TYPE", "text": phrase(rng, 3)}),
                7 => json!({"kind": "SCROLL", "direction": *["UP", "DOWN"].choose(rng).unwrap()}),
                8 => json!({"kind": "CUSTOM", "name": "LONG_PRESS"}),
                _ => json!({"kind": "CUSTOM", "name": "PRESS_BACK"}),
            };
            json!({"from": format!("s{a}"), "element": [e], "action": action, "to": format!("s{b}")})
        })
        .collect();
    json!({
        "schema": ENV_SCHEMA,
        "version": ENV_VERSION,
        "id": id,
        "task": *TASKS.choose(rng).unwrap(),
        "initial": "s0",
        "states": states,
        "transitions": transitions,
    })
}

/// Per-generator counts for a written corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSummary {
    pub pages: usize,
    pub environments: usize,
}

/// Write a fixture corpus: `snapshots/pNNN.json` plus `envs/eNN.json`.
/// Pages and environments draw from independent seed streams.
pub fn write_corpus(
    dir: &Path,
    pages: usize,
    environments: usize,
    seed: u64,
) -> Result<CorpusSummary, RecordError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| RecordError::Io { path, source }
    };
    let snap_dir = dir.join("snapshots");
    let env_dir = dir.join("envs");
    fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
    fs::create_dir_all(&env_dir).map_err(io(&env_dir))?;
    let mut rng = seeded(derive_seed(seed, "pages"));
    for i in 0..pages {
        let id = format!("p{i:03}");
        let doc = random_page_doc(&mut rng, &id);
        let p = snap_dir.join(format!("{id}.json"));
        fs::write(&p, serde_json::to_string_pretty(&doc).expect("json") + "\n").map_err(io(&p))?;
    }
    let mut rng = seeded(derive_seed(seed, "envs"));
    for i in 0..environments {
        let id = format!("e{i:02}");
        let n = rng.gen_range(3..=8);
        let doc = random_env_doc(&mut rng, &id, n);
        let p = env_dir.join(format!("{id}.json"));
        fs::write(&p, serde_json::to_string_pretty(&doc).expect("json") + "\n").map_err(io(&p))?;
    }
    Ok(CorpusSummary { pages, environments })
}

/// Count of distinct canonical names in an action list, split into basic
/// and custom.
pub fn action_type_counts<'a>(actions: impl IntoIterator<Item = &'a UnifiedAction>) -> (usize, usize) {
    let mut names = BTreeMap::new();
    for a in actions {
        *names.entry(a.name().to_string()).or_insert(0usize) += 1;
    }
    let basic = names
        .keys()
        .filter(|n| matches!(n.as_str(), "CLICK" | "TYPE" | "SCROLL"))
        .count();
    (basic, names.len() - basic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{parse_action, serialize_action, Dialect};
    use crate::explore::{explore, ExplorationPolicy, PolicyKind};

    #[test]
    fn generated_actions_round_trip() {
        let mut rng = seeded(11);
        let vocab = Vocabulary::builtin();
        for _ in 0..2000 {
            let a = random_action(&mut rng, &vocab);
            for d in Dialect::ALL {
                let s = serialize_action(&a, d);
                let back = parse_action(&s, d).unwrap_or_else(|e| panic!("{s:?}: {e}"));
                assert_eq!(back, a);
                assert_eq!(serialize_action(&back, d), s);
            }
        }
    }

    #[test]
    fn generated_pages_load() {
        let mut rng = seeded(3);
        for i in 0..200 {
            let p = random_page(&mut rng, &format!("p{i}"));
            assert!(p.root.node_count() >= 2);
        }
    }

    #[test]
    fn generated_envs_load_and_explore() {
        let mut rng = seeded(5);
        for i in 0..20 {
            let doc = random_env_doc(&mut rng, &format!("e{i}"), 6);
            let env = GuiEnvironment::from_json_str(&doc.to_string(), None).unwrap();
            explore(
                &env,
                &ExplorationPolicy {
                    kind: PolicyKind::Dfs,
                    max_steps: 100,
                    seed: 0,
                },
            )
            .unwrap();
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_corpus(a.path(), 5, 2, 9).unwrap();
        write_corpus(b.path(), 5, 2, 9).unwrap();
        for f in ["snapshots/p004.json", "envs/e01.json"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap()
            );
        }
    }
}
