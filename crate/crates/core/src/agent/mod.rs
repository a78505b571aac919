//! The agent loop and the memory it carries between steps and runs.

mod coverage;
mod history;
mod objective;
mod reflect;
mod run;

pub use coverage::{CoverageMap, OutcomeTag, PairStats, StorageError, COVERAGE_SCHEMA};
pub use history::{
    no_progress, status_name, History, HistoryEntry, HistorySummary, OutcomeCounts,
    DEFAULT_SUMMARY_CAP,
};
pub use objective::Objective;
pub use reflect::{BugType, ReflectionOutcome, Suspicion};
pub use run::{
    decide, fallback, inject_plan, record_transition, reflect, run_task, Agent, AgentError,
    ReflectionRecord, ReflectionTrigger, RunConfig, RunResult, Situation, Termination,
};

pub(crate) use coverage::{hex, read_locked, write_locked};
#[cfg(test)]
pub(crate) use history::entry;
