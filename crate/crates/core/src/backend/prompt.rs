//! Prompt builders. All are pure functions of their inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{BackendError, Prompt, PromptKind};
use crate::action_space::BundleEntry;
use crate::agent::{HistorySummary, Objective};
use crate::perception::AbstractState;
use crate::sim::Snapshot;

pub const DEFAULT_TOKEN_BUDGET: usize = 4_000;

const ROLE: &str = "You are a game tester exploring a quest-based online role-playing game. \
Work towards the current quest objective, prefer actions that reach states not seen before, \
and watch for defects such as crashes, frozen interactions, quest logic errors, or unusually \
slow responses.";

/// Everything a backend sees when choosing the next action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionContext {
    pub state: AbstractState,
    pub objective: String,
    /// `(canonical action, rationale)` in rank order.
    pub bundle: Vec<(String, String)>,
    pub history: HistorySummary,
    pub constraints: String,
}

impl DecisionContext {
    pub fn default_constraints() -> String {
        "Choose an action that is available in the current state. The recommended list is \
         advisory; another available action is acceptable if it is more promising."
            .into()
    }
}

fn state_block(out: &mut String, state: &AbstractState) {
    out.push_str("[State]\n");
    let _ = writeln!(out, "key: {}", state.key);
    if !state.features.is_empty() {
        let _ = writeln!(out, "{state}");
    }
}

/// Renders the decision prompt. The history is trimmed from the oldest end
/// until the prompt fits `budget` tokens; the bundle is never cut.
pub fn build_decision_prompt(ctx: &DecisionContext, budget: usize) -> Result<Prompt, BackendError> {
    let mut lines = ctx.history.lines.clone();
    let mut dropped = 0usize;
    loop {
        let mut user = String::new();
        state_block(&mut user, &ctx.state);
        let _ = writeln!(user, "\n[Objective]\n{}", ctx.objective);
        user.push_str("\n[Recommended Actions]\n");
        for (i, (action, why)) in ctx.bundle.iter().enumerate() {
            let _ = writeln!(user, "{}. {action} | {why}", i + 1);
        }
        user.push_str("\n[Recent History]\n");
        let summary = HistorySummary {
            total: ctx.history.total,
            omitted: ctx.history.omitted,
            lines: lines.clone(),
        };
        if dropped > 0 {
            let _ = writeln!(user, "({dropped} more earlier actions not shown)");
        }
        let _ = writeln!(user, "{}", summary.render());
        let _ = writeln!(user, "\n[Constraints]\n{}", ctx.constraints);
        user.push_str(
            "\n[Output Format]\nReply with exactly one action on a single line, written as \
             Template(slot=value, ...). Example reply: Move(to=market)\n",
        );
        let prompt = Prompt { kind: PromptKind::Decision, system: ROLE.into(), user };
        let tokens = prompt.approx_tokens();
        if tokens <= budget {
            return Ok(prompt);
        }
        if lines.is_empty() {
            return Err(BackendError::BudgetExceeded { tokens, budget });
        }
        let cut = lines.len().div_ceil(2);
        lines.drain(..cut);
        dropped += cut;
    }
}

/// Inputs to the reflection prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionContext {
    pub state: AbstractState,
    pub objective: Objective,
    pub coords: [i64; 3],
    pub nearby_npcs: Vec<String>,
    pub objects: Vec<String>,
    pub history: HistorySummary,
    /// Key steps already completed.
    pub completed_steps: Vec<String>,
    /// One entry per step: `id done|active|pending counter/required`.
    pub step_status: Vec<String>,
    pub available: Vec<String>,
    pub untried: Vec<String>,
    pub snapshot: Snapshot,
    pub previous_reflections: usize,
    pub coverage_nodes: usize,
}

fn braces(items: &[String], sep: &str) -> String {
    format!("{{{}}}", items.join(sep))
}

pub fn build_reflection_prompt(ctx: &ReflectionContext) -> Prompt {
    let mut u = String::new();
    u.push_str(
        "[Interactive Object]: When the objective names an NPC or item that is listed nearby \
         yet every attempt to use it fails, walk up to it before retrying, or switch to another \
         way of interacting.\n\n",
    );
    u.push_str(
        "[Task Progress]: An open overlay can swallow input. Dismiss any listed overlay before \
         repeating an action that should have worked.\n\n",
    );
    u.push_str(
        "[Player]: (1) Reaching the target is not the same as engaging it; start a conversation \
         or use the objective item once there.\n(2) Check the player location against the \
         objective and move there first when they differ.\n\n",
    );
    u.push_str(
        "[Task Requirement]: Some steps only count inside a conversation. If the NPC expects an \
         item, talk to them first and hand it over while the dialogue is open.\n\n",
    );
    let [x, y, z] = ctx.coords;
    let h = &ctx.history;
    let mut history: Vec<String> = Vec::new();
    if h.omitted.total() > 0 {
        history.push(format!("{} earlier actions omitted", h.omitted.total()));
    }
    history.extend(h.lines.iter().cloned());
    u.push_str("[Game Information]:\n");
    let _ = writeln!(u, "Player Coordinates: {{{x}, {y}, {z}}}");
    let _ = writeln!(u, "Nearby NPCs: {}", braces(&ctx.nearby_npcs, ", "));
    let _ = writeln!(u, "Game Objects: {}", braces(&ctx.objects, ", "));
    let _ = writeln!(u, "Action History: {}", braces(&history, "; "));
    let _ = writeln!(
        u,
        "Task Coverage Map: {} ({} states explored)",
        braces(&ctx.completed_steps, ", "),
        ctx.coverage_nodes
    );
    let _ = writeln!(
        u,
        "Interactive Button Available: {}",
        if ctx.snapshot.interactive_button { "True" } else { "False" }
    );
    let _ = writeln!(u, "Objective: {}", ctx.objective.describe());
    let _ = writeln!(u, "Target: {}", ctx.objective.target());
    let _ = writeln!(u, "Step Status: {}", braces(&ctx.step_status, ", "));
    let overlays: Vec<String> = ctx.snapshot.overlays.iter().cloned().collect();
    let _ = writeln!(u, "UI Overlays: {}", braces(&overlays, ", "));
    let _ = writeln!(u, "Recent Log: {}", braces(&ctx.snapshot.log_tail, "; "));
    let _ = writeln!(u, "Abstract State: {}", ctx.state.key);
    let _ = writeln!(u, "Available Actions: {}", braces(&ctx.available, "; "));
    let _ = writeln!(u, "Untried Actions: {}", braces(&ctx.untried, "; "));
    let _ = writeln!(u, "Previous Reflections: {}", ctx.previous_reflections);
    u.push_str("\n--- Reflection Questions ---\n\n");
    u.push_str("1. What are possible causes for no progress?\n");
    u.push_str(
        "2. Which actions, in order, should the tester attempt now (movement, a different way \
         of interacting, closing overlays)?\n",
    );
    u.push_str(
        "3. Does the trace point to a defect? If so, name it as logic, hang or interaction \
         and cite the observations behind it.\n\n",
    );
    u.push_str("[Constraints]:\n");
    u.push_str(
        "- Write every suggestion as an action from the available list.\n",
    );
    u.push_str("- Favour actions and states not yet tried.\n");
    u.push_str("- When several plans fit, order them by plausibility.\n\n");
    u.push_str(
        "[Output Format]\nEither a line `PLAN:` followed by one action per line, or a line \
         `BUG: <logic|hang|interaction>` followed by one `evidence:` line per observation. \
         An `analysis:` line may follow either form.\n",
    );
    Prompt { kind: PromptKind::Reflection, system: ROLE.into(), user: u }
}

/// Asks a backend to reorder rule-ranked candidates.
pub fn build_rerank_prompt(state: &AbstractState, objective: &Objective, candidates: &[BundleEntry]) -> Prompt {
    let mut u = String::new();
    state_block(&mut u, state);
    let _ = writeln!(u, "\n[Objective]\n{}", objective.describe());
    u.push_str("\n[Candidates]\n");
    for (i, e) in candidates.iter().enumerate() {
        let _ = writeln!(u, "{}. {} | {}", i + 1, e.action, e.rationale());
    }
    u.push_str(
        "\n[Output Format]\nRepeat the candidates you consider most promising, best first, one \
         action per line. Omitted candidates keep their relative order after yours.\n",
    );
    Prompt { kind: PromptKind::Rerank, system: ROLE.into(), user: u }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::FeatureValue;

    fn ctx(history: usize) -> DecisionContext {
        let h = crate::agent::History::new();
        let mut summary = h.summarize(30);
        summary.lines = (0..history).map(|i| format!("#{i} Explore(direction=north) -> no-change")).collect();
        DecisionContext {
            state: AbstractState::from_features(vec![("location".into(), FeatureValue::Symbol("hall".into()))]),
            objective: "Greet the guard".into(),
            bundle: vec![
                ("Talk(to=guard)".into(), "score 2.00".into()),
                ("Explore(direction=north)".into(), "score 0.00".into()),
            ],
            history: summary,
            constraints: DecisionContext::default_constraints(),
        }
    }

    #[test]
    fn decision_prompt_has_all_blocks_and_is_stable() {
        let p = build_decision_prompt(&ctx(2), DEFAULT_TOKEN_BUDGET).unwrap();
        for block in ["[State]", "[Objective]", "[Recommended Actions]", "[Output Format]"] {
            assert!(p.user.contains(block), "missing {block}");
        }
        assert!(p.system.contains("game tester"));
        assert_eq!(p, build_decision_prompt(&ctx(2), DEFAULT_TOKEN_BUDGET).unwrap());
    }

    #[test]
    fn oversized_history_is_trimmed_not_the_bundle() {
        let p = build_decision_prompt(&ctx(1_000), 1_500).unwrap();
        assert!(p.approx_tokens() <= 1_500);
        assert!(p.user.contains("1. Talk(to=guard)"));
        assert!(p.user.contains("2. Explore(direction=north)"));
        assert!(p.user.contains("more earlier actions not shown"));
    }

    #[test]
    fn impossible_budget_is_an_error() {
        assert!(matches!(
            build_decision_prompt(&ctx(0), 10),
            Err(BackendError::BudgetExceeded { .. })
        ));
    }
}
