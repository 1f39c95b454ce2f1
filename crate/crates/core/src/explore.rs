//! Simulated desktop/mobile data collection over a declarative state graph.
//!
//! An environment file lists states (inline snapshots or snapshot file
//! references) and a transition table keyed by `(state, element path, action)`:
//!
//! ```json
//! {"schema": "groundkit.env", "version": 1, "id": "settings-app",
//!  "task": "Turn on dark mode", "initial": "home",
//!  "states": [{"id": "home", "snapshot": {...}},
//!             {"id": "display", "snapshot_file": "display.json"}],
//!  "transitions": [{"from": "home", "element": [0, 2],
//!                   "action": {"kind": "CLICK"}, "to": "display"}]}
//! ```
//!
//! Click-like actions target the element's box center, normalized to the
//! state's page size. DFS expands transitions in element document order;
//! random walks draw uniformly among outgoing transitions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{
    serialize_action, ActionError, ActionName, ActionText, Dialect, Direction, Slot, UnifiedAction,
    Vocabulary,
};
use crate::geom::{normalize_box, normalize_point, Dims};
use crate::rng::seeded;
use crate::segment::screenshot_ref;
use crate::snapshot::{NodePath, PageSnapshot};
use crate::unify::AgentStep;

pub const ENV_SCHEMA: &str = "groundkit.env";
pub const ENV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("environment file: {0}")]
    Format(String),
    #[error("state `{state}`: {source}")]
    Snapshot {
        state: String,
        #[source]
        source: crate::snapshot::SnapshotError,
    },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state `{state}` has no node at {path}")]
    UnknownElement { state: String, path: NodePath },
    #[error("duplicate transition from `{state}` at {path} for {action}")]
    DuplicateTransition {
        state: String,
        path: NodePath,
        action: String,
    },
    #[error("transition from `{state}` at {path}: {source}")]
    Action {
        state: String,
        path: NodePath,
        #[source]
        source: ActionError,
    },
    #[error(
        "step budget exhausted after visiting {visited} states; {frontier} reachable states still pending"
    )]
    BudgetExhausted { visited: usize, frontier: usize },
    #[error("max_steps must be at least 1")]
    EmptyBudget,
}

/// Action named in a transition; coordinates come from the element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum TransitionAction {
    Click,
    Type {
        text: String,
    },
    Scroll {
        direction: Direction,
    },
    Custom {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<Direction>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: String,
    pub element: NodePath,
    pub action: UnifiedAction,
    pub to: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvFile {
    schema: String,
    version: u32,
    id: String,
    #[serde(default)]
    task: String,
    initial: String,
    states: Vec<StateEntry>,
    transitions: Vec<TransitionEntry>,
    /// Optional custom-action manifest entries (`slots` per name).
    #[serde(default)]
    custom_actions: BTreeMap<String, Vec<Slot>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateEntry {
    id: String,
    #[serde(default)]
    snapshot: Option<serde_json::Value>,
    #[serde(default)]
    snapshot_file: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    from: String,
    element: NodePath,
    action: TransitionAction,
    to: String,
}

/// A deterministic GUI state graph.
#[derive(Debug, Clone)]
pub struct GuiEnvironment {
    id: String,
    task: String,
    initial: String,
    states: BTreeMap<String, PageSnapshot>,
    outgoing: BTreeMap<String, Vec<Transition>>,
}

impl GuiEnvironment {
    pub fn load(path: &Path) -> Result<Self, ExploreError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ExploreError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&src, path.parent())
    }

    /// Parse an environment document; `base` resolves `snapshot_file` entries.
    pub fn from_json_str(src: &str, base: Option<&Path>) -> Result<Self, ExploreError> {
        let file: EnvFile = serde_json::from_str(src).map_err(|e| ExploreError::Format(e.to_string()))?;
        if file.schema != ENV_SCHEMA || file.version != ENV_VERSION {
            return Err(ExploreError::Format(format!(
                "expected schema {ENV_SCHEMA} v{ENV_VERSION}, got {} v{}",
                file.schema, file.version
            )));
        }
        let mut vocab = Vocabulary::builtin();
        for (name, slots) in file.custom_actions {
            let n = ActionName::new(name).map_err(|e| ExploreError::Format(e.to_string()))?;
            vocab
                .declare(n, slots)
                .map_err(|e| ExploreError::Format(e.to_string()))?;
        }

        let mut states = BTreeMap::new();
        for s in file.states {
            let bytes = match (s.snapshot, s.snapshot_file) {
                (Some(v), None) => v.to_string().into_bytes(),
                (None, Some(f)) => {
                    let p = base.map(|b| b.join(&f)).unwrap_or_else(|| f.clone().into());
                    std::fs::read(&p).map_err(|e| ExploreError::Format(format!("{}: {e}", p.display())))?
                }
                _ => {
                    return Err(ExploreError::Format(format!(
                        "state `{}` needs exactly one of snapshot / snapshot_file",
                        s.id
                    )))
                }
            };
            let snap = crate::snapshot::load_snapshot(&bytes).map_err(|source| ExploreError::Snapshot {
                state: s.id.clone(),
                source,
            })?;
            if states.insert(s.id.clone(), snap).is_some() {
                return Err(ExploreError::Format(format!("duplicate state `{}`", s.id)));
            }
        }
        let mut transitions = Vec::with_capacity(file.transitions.len());
        for t in file.transitions {
            transitions.push((t.from, t.element, t.action, t.to));
        }
        Self::new(file.id, file.task, file.initial, states, transitions, &vocab)
    }

    pub fn new(
        id: String,
        task: String,
        initial: String,
        states: BTreeMap<String, PageSnapshot>,
        transitions: Vec<(String, NodePath, TransitionAction, String)>,
        vocab: &Vocabulary,
    ) -> Result<Self, ExploreError> {
        if !states.contains_key(&initial) {
            return Err(ExploreError::UnknownState(initial));
        }
        let mut outgoing: BTreeMap<String, Vec<Transition>> = BTreeMap::new();
        let mut keys = HashSet::new();
        for (from, element, action, to) in transitions {
            let snap = states
                .get(&from)
                .ok_or_else(|| ExploreError::UnknownState(from.clone()))?;
            if !states.contains_key(&to) {
                return Err(ExploreError::UnknownState(to));
            }
            let node = snap
                .root
                .at(&element.0)
                .ok_or_else(|| ExploreError::UnknownElement {
                    state: from.clone(),
                    path: element.clone(),
                })?;
            let realized = realize(&action, node.bbox, snap.page_size, vocab).map_err(|source| {
                ExploreError::Action {
                    state: from.clone(),
                    path: element.clone(),
                    source,
                }
            })?;
            if !keys.insert((from.clone(), element.clone(), realized.name().to_string())) {
                return Err(ExploreError::DuplicateTransition {
                    state: from,
                    path: element,
                    action: realized.name().to_string(),
                });
            }
            outgoing.entry(from.clone()).or_default().push(Transition {
                from,
                element,
                action: realized,
                to,
            });
        }
        for list in outgoing.values_mut() {
            // stable: ties keep file order
            list.sort_by(|a, b| a.element.cmp(&b.element));
        }
        Ok(Self {
            id,
            task,
            initial,
            states,
            outgoing,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn initial(&self) -> &str {
        &self.initial
    }

    pub fn state(&self, id: &str) -> Option<&PageSnapshot> {
        self.states.get(id)
    }

    pub fn states(&self) -> impl Iterator<Item = (&str, &PageSnapshot)> {
        self.states.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn outgoing(&self, state: &str) -> &[Transition] {
        self.outgoing.get(state).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn realize(
    action: &TransitionAction,
    bbox: crate::geom::PixelBox,
    page: Dims,
    vocab: &Vocabulary,
) -> Result<UnifiedAction, ActionError> {
    let point = || normalize_point(bbox.center(), page).expect("page dims validated");
    let text = |t: &Option<String>| t.clone().map(ActionText::new).transpose();
    match action {
        TransitionAction::Click => Ok(UnifiedAction::click(point())),
        TransitionAction::Type { text } => UnifiedAction::type_text(text.clone()),
        TransitionAction::Scroll { direction } => Ok(UnifiedAction::scroll(*direction)),
        TransitionAction::Custom {
            name,
            text: t,
            direction,
        } => {
            let name = ActionName::new(name.clone())?;
            let slots = vocab
                .slots(name.as_str())
                .ok_or_else(|| ActionError::UnknownAction {
                    name: name.to_string(),
                    pos: 0,
                })?;
            let has = |s| slots.contains(&s);
            let a = UnifiedAction::from_parts(
                &name,
                has(Slot::Point).then(point),
                has(Slot::Box).then(|| normalize_box(bbox, page).expect("page dims validated")),
                if has(Slot::Text) { text(t)? } else { None },
                if has(Slot::Direction) { *direction } else { None },
            )?;
            vocab.check(&a)?;
            Ok(a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Dfs,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub kind: PolicyKind,
    pub max_steps: usize,
    /// Used by random walks only.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub state: String,
    pub element: NodePath,
    pub action: UnifiedAction,
    pub next: String,
    pub screen: Dims,
    pub screenshot_ref: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub env_id: String,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    /// Each step's `next` is the following step's `state`.
    pub fn is_chained(&self) -> bool {
        self.steps.windows(2).all(|w| w[0].next == w[1].state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exploration {
    /// States in first-visit order, starting with the initial state.
    pub visited: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub backtracks: usize,
}

fn step_of(env: &GuiEnvironment, t: &Transition) -> TrajectoryStep {
    let snap = &env.states[&t.from];
    TrajectoryStep {
        state: t.from.clone(),
        element: t.element.clone(),
        action: t.action.clone(),
        next: t.to.clone(),
        screen: snap.page_size,
        screenshot_ref: screenshot_ref(&snap.id, 0),
    }
}

pub fn explore(env: &GuiEnvironment, policy: &ExplorationPolicy) -> Result<Exploration, ExploreError> {
    if policy.max_steps == 0 {
        return Err(ExploreError::EmptyBudget);
    }
    match policy.kind {
        PolicyKind::Dfs => dfs(env, policy.max_steps),
        PolicyKind::RandomWalk => Ok(random_walk(env, policy.max_steps, policy.seed)),
    }
}

/// Depth-first search; every root-to-leaf path of the search tree becomes a
/// trajectory (a harness would reset to the initial state and replay it).
fn dfs(env: &GuiEnvironment, max_steps: usize) -> Result<Exploration, ExploreError> {
    struct Frame<'a> {
        state: &'a str,
        next: usize,
        expanded: bool,
    }
    let mut visited = vec![env.initial.clone()];
    let mut seen: HashSet<&str> = HashSet::from([env.initial.as_str()]);
    let mut stack = vec![Frame {
        state: &env.initial,
        next: 0,
        expanded: false,
    }];
    let mut path: Vec<TrajectoryStep> = Vec::new();
    let mut trajectories = Vec::new();
    let mut backtracks = 0;
    let mut steps = 0;

    while let Some(top) = stack.last_mut() {
        let out = env.outgoing(top.state);
        let pick = out[top.next..].iter().position(|t| !seen.contains(t.to.as_str()));
        match pick {
            Some(off) => {
                let t = &out[top.next + off];
                top.next += off + 1;
                if steps == max_steps {
                    let frontier: BTreeSet<&str> = stack
                        .iter()
                        .flat_map(|f| {
                            let rest = &env.outgoing(f.state)[f.next.saturating_sub(1)..];
                            rest.iter().map(|t| t.to.as_str())
                        })
                        .filter(|s| !seen.contains(s))
                        .collect();
                    return Err(ExploreError::BudgetExhausted {
                        visited: visited.len(),
                        frontier: frontier.len(),
                    });
                }
                steps += 1;
                top.expanded = true;
                path.push(step_of(env, t));
                seen.insert(&t.to);
                visited.push(t.to.clone());
                stack.push(Frame {
                    state: &t.to,
                    next: 0,
                    expanded: false,
                });
            }
            None => {
                let frame = stack.pop().expect("non-empty");
                if !stack.is_empty() {
                    if !frame.expanded {
                        trajectories.push(Trajectory {
                            env_id: env.id.clone(),
                            steps: path.clone(),
                        });
                    }
                    path.pop();
                    backtracks += 1;
                }
            }
        }
    }
    Ok(Exploration {
        visited,
        trajectories,
        backtracks,
    })
}

/// Seeded uniform walk; revisits and self-loops are allowed, and the walk
/// stops early at a state with no outgoing transitions.
fn random_walk(env: &GuiEnvironment, max_steps: usize, seed: u64) -> Exploration {
    let mut rng = seeded(seed);
    let mut current = env.initial.as_str();
    let mut visited = vec![env.initial.clone()];
    let mut seen: HashSet<&str> = HashSet::from([current]);
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let out = env.outgoing(current);
        if out.is_empty() {
            break;
        }
        let t = &out[rng.gen_range(0..out.len())];
        steps.push(step_of(env, t));
        if seen.insert(&t.to) {
            visited.push(t.to.clone());
        }
        current = &t.to;
    }
    let trajectories = if steps.is_empty() {
        Vec::new()
    } else {
        vec![Trajectory {
            env_id: env.id.clone(),
            steps,
        }]
    };
    Exploration {
        visited,
        trajectories,
        backtracks: 0,
    }
}

/// One agent step per trajectory step; step `i` carries the TAGGED text of
/// actions `0..i` as history.
pub fn trajectory_to_steps(traj: &Trajectory, task_instruction: &str) -> Vec<AgentStep> {
    let mut history = Vec::with_capacity(traj.steps.len());
    traj.steps
        .iter()
        .map(|s| {
            let step = AgentStep {
                dataset: Some(traj.env_id.clone()),
                split: None,
                task: task_instruction.to_string(),
                screenshot_ref: s.screenshot_ref.clone(),
                screen: Some(s.screen),
                history: history.clone(),
                thought: None,
                gt_action: s.action.clone(),
                predicted_action: None,
            };
            history.push(serialize_action(&s.action, Dialect::Tagged));
            step
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::action::parse_action;

    fn dfs_policy() -> ExplorationPolicy {
        ExplorationPolicy {
            kind: PolicyKind::Dfs,
            max_steps: 1000,
            seed: 0,
        }
    }

    #[test]
    fn linear_chain() {
        let env = graph_env(3, &[(0, 1), (1, 2)]);
        let out = explore(&env, &dfs_policy()).unwrap();
        assert_eq!(out.visited, ["s0", "s1", "s2"]);
        assert_eq!(out.trajectories.len(), 1);
        assert_eq!(out.trajectories[0].steps.len(), 2);
        assert!(out.trajectories[0].is_chained());
    }

    #[test]
    fn star_graph() {
        let env = graph_env(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let out = explore(&env, &dfs_policy()).unwrap();
        assert_eq!(out.visited.len(), 5);
        assert_eq!(out.backtracks, 4);
        assert_eq!(out.trajectories.len(), 4);
    }

    #[test]
    fn dfs_never_revisits_and_handles_cycles() {
        let env = graph_env(4, &[(0, 1), (1, 0), (1, 2), (2, 2), (2, 3), (3, 1)]);
        let out = explore(&env, &dfs_policy()).unwrap();
        assert_eq!(out.visited, ["s0", "s1", "s2", "s3"]);
    }

    #[test]
    fn dfs_budget_reports_frontier() {
        let env = graph_env(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let p = ExplorationPolicy {
            max_steps: 2,
            ..dfs_policy()
        };
        match explore(&env, &p) {
            Err(ExploreError::BudgetExhausted { visited, frontier }) => {
                assert_eq!(visited, 3);
                assert_eq!(frontier, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_walk_is_reproducible() {
        let env = graph_env(
            5,
            &[(0, 1), (0, 2), (0, 3), (0, 4), (1, 0), (2, 0), (3, 0), (4, 0)],
        );
        let p = ExplorationPolicy {
            kind: PolicyKind::RandomWalk,
            max_steps: 10,
            seed: 7,
        };
        let a = explore(&env, &p).unwrap();
        let b = explore(&env, &p).unwrap();
        let bytes = |e: &Exploration| serde_json::to_string(&e.trajectories).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        assert_eq!(a.trajectories[0].steps.len(), 10);
        assert!(a.trajectories[0].is_chained());
    }

    #[test]
    fn random_walk_stops_at_dead_end() {
        let env = graph_env(2, &[(0, 1)]);
        let p = ExplorationPolicy {
            kind: PolicyKind::RandomWalk,
            max_steps: 10,
            seed: 1,
        };
        let out = explore(&env, &p).unwrap();
        assert_eq!(out.trajectories[0].steps.len(), 1);
    }

    #[test]
    fn invalid_environments() {
        let snap = buttons_snapshot("a", 1);
        let states = BTreeMap::from([("a".to_string(), snap)]);
        let v = Vocabulary::builtin();
        let bad_path = vec![("a".into(), NodePath(vec![5]), TransitionAction::Click, "a".into())];
        assert!(matches!(
            GuiEnvironment::new("e".into(), "".into(), "a".into(), states.clone(), bad_path, &v),
            Err(ExploreError::UnknownElement { .. })
        ));
        let bad_to = vec![("a".into(), NodePath(vec![0]), TransitionAction::Click, "b".into())];
        assert!(matches!(
            GuiEnvironment::new("e".into(), "".into(), "a".into(), states.clone(), bad_to, &v),
            Err(ExploreError::UnknownState(_))
        ));
        assert!(matches!(
            GuiEnvironment::new("e".into(), "".into(), "z".into(), states.clone(), vec![], &v),
            Err(ExploreError::UnknownState(_))
        ));
        let open_app = vec![(
            "a".into(),
            NodePath(vec![0]),
            TransitionAction::Custom {
                name: "OPEN_APP".into(),
                text: None,
                direction: None,
            },
            "a".into(),
        )];
        assert!(matches!(
            GuiEnvironment::new("e".into(), "".into(), "a".into(), states, open_app, &v),
            Err(ExploreError::Action { .. })
        ));
    }

    #[test]
    fn steps_from_trajectory() {
        let snap1 = buttons_snapshot("a", 2);
        let snap2 = buttons_snapshot("b", 1);
        let snap3 = buttons_snapshot("c", 1);
        let states = BTreeMap::from([
            ("a".to_string(), snap1),
            ("b".to_string(), snap2),
            ("c".to_string(), snap3),
        ]);
        let transitions = vec![
            ("a".into(), NodePath(vec![0]), TransitionAction::Click, "b".into()),
            (
                "b".into(),
                NodePath(vec![0]),
                TransitionAction::Type {
                    text: "hello]".into(),
                },
                "c".into(),
            ),
            (
                "c".into(),
                NodePath(vec![0]),
                TransitionAction::Custom {
                    name: "LONG_PRESS".into(),
                    text: None,
                    direction: None,
                },
                "a".into(),
            ),
        ];
        let env = GuiEnvironment::new(
            "e".into(),
            "do it".into(),
            "a".into(),
            states,
            transitions,
            &Vocabulary::builtin(),
        )
        .unwrap();
        let p = ExplorationPolicy {
            kind: PolicyKind::RandomWalk,
            max_steps: 3,
            seed: 3,
        };
        let traj = &explore(&env, &p).unwrap().trajectories[0];
        let steps = trajectory_to_steps(traj, env.task());
        assert_eq!(steps.len(), 3);
        assert!(steps[0].history.is_empty());
        assert_eq!(steps[2].history.len(), 2);
        assert_eq!(steps[2].history[0], "CLICK <point>[[500, 73]]</point>");
        for s in &steps {
            for h in &s.history {
                parse_action(h, Dialect::Tagged).unwrap();
            }
        }
        assert_eq!(steps[1].gt_action, UnifiedAction::type_text("hello]").unwrap());
        assert_eq!(
            parse_action(&steps[2].history[1], Dialect::Tagged).unwrap(),
            steps[1].gt_action
        );
    }

    #[test]
    fn environment_file_round_trip() {
        let snap = buttons_snapshot("home", 1);
        let doc = serde_json::json!({
            "schema": ENV_SCHEMA, "version": 1, "id": "e", "task": "t", "initial": "home",
            "states": [{"id": "home", "snapshot": serde_json::from_str::<serde_json::Value>(&snap.to_json()).unwrap()}],
            "transitions": [{"from": "home", "element": [0], "action": {"kind": "SCROLL", "direction": "DOWN"}, "to": "home"}]
        });
        let env = GuiEnvironment::from_json_str(&doc.to_string(), None).unwrap();
        assert_eq!(env.outgoing("home").len(), 1);
        assert_eq!(
            env.outgoing("home")[0].action,
            UnifiedAction::scroll(Direction::Down)
        );
        let bad = doc.to_string().replace("groundkit.env", "other");
        assert!(GuiEnvironment::from_json_str(&bad, None).is_err());
    }
}
