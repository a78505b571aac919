//! Exhaustive reachability over the abstract state space.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::spec::ScenarioSpec;
use super::world::{RawState, WorldState};
use super::SimError;

pub const DEFAULT_STATE_CAP: usize = 100_000;

/// Edge target used when the action crashes the client.
pub const CRASH_NODE: &str = "<crashed>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReachabilityGraph {
    /// Abstract state keys.
    pub nodes: BTreeSet<String>,
    /// `(from, action, to)`; `to` is [`CRASH_NODE`] for crashing transitions.
    pub edges: BTreeSet<(String, String, String)>,
    /// True when some reachable state has the quest complete.
    pub completable: bool,
    /// Number of distinct concrete world states explored.
    pub world_states: usize,
}

impl ReachabilityGraph {
    /// Distinct actions that lead somewhere other than their source state.
    pub fn effective_actions(&self) -> BTreeSet<&str> {
        self.edges.iter().filter(|(f, _, t)| f != t).map(|(_, a, _)| a.as_str()).collect()
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!(
            "# nodes={} edges={} completable={}\n",
            self.nodes.len(),
            self.edges.len(),
            self.completable
        );
        for (f, a, t) in &self.edges {
            let _ = writeln!(out, "{f}\t{a}\t{t}");
        }
        out
    }
}

/// Breadth-first search from the initial world over every enumerated
/// action. Concrete states are deduplicated on their semantic core; nodes
/// are the abstract keys produced by `key`. Crashed and completed states are
/// not expanded.
pub fn full_state_graph<F>(spec: &ScenarioSpec, key: F, cap: usize) -> Result<ReachabilityGraph, SimError>
where
    F: Fn(&RawState) -> String,
{
    let start = WorldState::new(spec.clone())?;
    let quest = spec.quest.id.clone();
    let mut seen = HashSet::from([start.core().clone()]);
    let mut queue = VecDeque::from([start]);
    let mut graph = ReachabilityGraph {
        nodes: BTreeSet::new(),
        edges: BTreeSet::new(),
        completable: false,
        world_states: 0,
    };
    while let Some(world) = queue.pop_front() {
        let raw = world.read_state()?;
        let from = key(&raw);
        graph.nodes.insert(from.clone());
        if world.task_complete(&quest)? {
            graph.completable = true;
            continue;
        }
        for action in world.enumerate_actions()? {
            let mut next = world.clone();
            next.execute(&action);
            let to = match next.read_state() {
                Ok(raw) => key(&raw),
                Err(_) => CRASH_NODE.to_string(),
            };
            graph.edges.insert((from.clone(), action.canonical(), to));
            if !next.is_crashed() && seen.insert(next.core().clone()) {
                if seen.len() > cap {
                    return Err(SimError::CapExceeded(cap));
                }
                queue.push_back(next);
            }
        }
    }
    graph.world_states = seen.len();
    Ok(graph)
}
