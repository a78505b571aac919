//! Deterministic quest-world simulator with fault injection.

mod reach;
mod spec;
mod world;

pub use reach::{full_state_graph, ReachabilityGraph, CRASH_NODE, DEFAULT_STATE_CAP};
pub use spec::{
    Difficulty, DurationTable, FaultKind, FaultSpec, ItemEffect, ItemSpec, LocationSpec, NpcSpec,
    Predicate, QuestSpec, ScenarioSpec, StepSpec, Trigger, IN_INVENTORY, OUT_OF_WORLD,
    SCENARIO_SCHEMA,
};
pub use world::{
    Bystander, FaultEvent, NearbyNpc, Outcome, OutcomeStatus, PlayerState, QuestLog, RawState,
    Snapshot, StepTruth, WorldState, LOG_TAIL,
};

#[cfg(test)]
pub(crate) use spec::fixtures;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    SpecInvalid(String),
    #[error("the game client has crashed")]
    WorldCrashed,
    #[error("unknown quest `{0}`")]
    UnknownQuest(String),
    #[error("state graph exceeds the cap of {0} states")]
    CapExceeded(usize),
}
