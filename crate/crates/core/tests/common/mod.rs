#![allow(dead_code)]

use std::path::PathBuf;

use questprobe::action_space::RuleSet;
use questprobe::backend::{Backend, BackendError, Prompt, PromptKind};
use questprobe::harness::{load_metadata, load_rules, load_scenario};
use questprobe::oracles::TimingBaseline;
use questprobe::{run_task, Agent, CoverageMap, GameMetadata, RunConfig, RunResult, ScenarioSpec, WorldState};
use serde_json::{json, Value};

pub fn game_a() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/game-a")
}

pub fn task_path(n: usize) -> PathBuf {
    game_a().join("tasks").join(format!("t{n:02}.json"))
}

pub fn meta() -> GameMetadata {
    load_metadata(&game_a().join("metadata.json")).unwrap()
}

pub fn rules(meta: &GameMetadata) -> RuleSet {
    load_rules(&game_a().join("rules.json"), meta).unwrap()
}

pub fn task(n: usize) -> ScenarioSpec {
    load_scenario(&task_path(n)).unwrap()
}

pub fn all_tasks() -> Vec<ScenarioSpec> {
    (1..=10).map(task).collect()
}

/// Builds a scenario from a partial document; missing top-level fields get
/// small defaults.
pub fn scenario(mut doc: Value) -> ScenarioSpec {
    let obj = doc.as_object_mut().unwrap();
    obj.entry("schema").or_insert(json!("scenario-v1"));
    obj.entry("difficulty").or_insert(json!("Simple"));
    obj.entry("seed").or_insert(json!(7));
    obj.entry("edges").or_insert(json!([]));
    ScenarioSpec::from_json(&doc.to_string()).unwrap()
}

/// One room, one guard, a talk quest. Nothing but talking makes progress.
pub fn guard_room(id: &str) -> ScenarioSpec {
    scenario(json!({
        "id": id,
        "start": "hall",
        "locations": [{"id": "hall"}],
        "npcs": [{"id": "guard", "location": "hall", "dialogue": "halt"}],
        "quest": {"id": "q", "description": "Greet the guard",
                  "steps": [{"id": "greet", "predicate": {"kind": "talk", "npc": "guard"}}]}
    }))
}

pub fn run_once(
    spec: &ScenarioSpec,
    meta: &GameMetadata,
    rules: &RuleSet,
    config: &RunConfig,
    backend: &mut dyn Backend,
    coverage: &mut CoverageMap,
    baseline: &mut TimingBaseline,
) -> RunResult {
    let mut world = WorldState::new(spec.clone()).unwrap();
    run_task(&mut world, Agent { meta, rules, config, backend, coverage, baseline })
}

/// Replies with fixed text per prompt kind.
pub struct Fixed {
    pub decision: String,
    pub reflection: String,
}

impl Fixed {
    pub fn new(decision: &str, reflection: &str) -> Self {
        Fixed { decision: decision.into(), reflection: reflection.into() }
    }
}

impl Backend for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        Ok(match prompt.kind {
            PromptKind::Reflection => self.reflection.clone(),
            _ => self.decision.clone(),
        })
    }
}
