//! Agent framework for automated testing of quest-based game worlds.
//!
//! A run perceives the game through a configurable abstraction, ranks the
//! feasible actions with rules and coverage memory, lets a decision backend
//! choose, reflects when progress stalls, and hands every step to a set of
//! oracles. A deterministic simulated world with injectable faults stands
//! in for the game.

pub mod action;
pub mod action_space;
pub mod agent;
pub mod backend;
pub mod harness;
pub mod oracles;
pub mod perception;
pub mod sim;

pub use action::{ActionPattern, ConcreteAction, Direction, Pathway, Template};
pub use action_space::{RecommendationBundle, RuleSet};
pub use agent::{run_task, Agent, CoverageMap, History, HistoryEntry, Objective, ReflectionOutcome, RunConfig, RunResult};
pub use backend::{Backend, BackendError, BackendKind, BackendParams};
pub use oracles::{DiagnosisReport, Finding, Issue, IssueKind, TimingBaseline};
pub use perception::{AbstractState, GameMetadata};
pub use sim::{ScenarioSpec, SimError, WorldState};
pub use harness::{run_suite, SuiteConfig, SuiteReport, SuiteRun};
