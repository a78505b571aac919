//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use questprobe::action_space::RuleSet;
use questprobe::harness::{load_metadata, load_rules, load_scenario};
use questprobe::{GameMetadata, ScenarioSpec};

pub fn game_a() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/game-a")
}

pub fn metadata() -> GameMetadata {
    load_metadata(&game_a().join("metadata.json")).expect("game-a metadata")
}

pub fn rules(meta: &GameMetadata) -> RuleSet {
    load_rules(&game_a().join("rules.json"), meta).expect("game-a rules")
}

/// Task `n` of Game A, 1-based.
pub fn task(n: usize) -> ScenarioSpec {
    load_scenario(&game_a().join("tasks").join(format!("t{n:02}.json"))).expect("game-a task")
}
