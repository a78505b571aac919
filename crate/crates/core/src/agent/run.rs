use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::coverage::{CoverageMap, OutcomeTag};
use super::history::{History, HistoryEntry, DEFAULT_SUMMARY_CAP};
use super::objective::Objective;
use super::reflect::{BugType, ReflectionOutcome};
use crate::action::ConcreteAction;
use crate::action_space::{
    filter_feasible, instantiate_templates, recommend, validate, RecommendParams,
    RecommendationBundle, RuleSet, DEFAULT_BUNDLE_SIZE, DEFAULT_PENALTY_WEIGHT,
};
use crate::backend::{
    build_decision_prompt, build_reflection_prompt, parse_action, parse_reflection, Backend,
    BackendError, DecisionContext, Prompt, ReflectionContext, DEFAULT_TOKEN_BUDGET,
};
use crate::oracles::{
    basic_report, crash_check, logic_check, make_stuck_diagnosis, task_time_check, time_check,
    Finding, Issue, TimingBaseline, DEFAULT_SENSITIVITY,
};
use crate::perception::{AbstractState, GameMetadata};
use crate::sim::{FaultEvent, Outcome, OutcomeStatus, RawState, WorldState};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("recommendation bundle is empty")]
    EmptyBundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Consecutive actions without progress before reflecting (X).
    pub reflect_threshold: usize,
    /// Bug suspicions in a row before the run is abandoned (Y).
    pub escalation_limit: usize,
    /// Per-task limit in simulator ticks (T).
    pub time_limit: u64,
    pub bundle_size: usize,
    pub penalty_weight: f64,
    /// Timing oracle sensitivity k.
    pub sensitivity: f64,
    pub summary_cap: usize,
    /// Actions taken after a bug suspicion before reflecting again.
    pub confirm_steps: usize,
    pub token_budget: usize,
    /// Let the backend reorder the rule ranking before each decision.
    pub rerank: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            reflect_threshold: 20,
            escalation_limit: 3,
            time_limit: 5_000,
            bundle_size: DEFAULT_BUNDLE_SIZE,
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
            sensitivity: DEFAULT_SENSITIVITY,
            summary_cap: DEFAULT_SUMMARY_CAP,
            confirm_steps: 3,
            token_budget: DEFAULT_TOKEN_BUDGET,
            rerank: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let fail = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.reflect_threshold == 0 {
            return fail("reflect threshold must be at least 1");
        }
        if self.escalation_limit == 0 {
            return fail("escalation limit must be at least 1");
        }
        if self.time_limit == 0 {
            return fail("time limit must be positive");
        }
        if self.bundle_size == 0 {
            return fail("bundle size must be at least 1");
        }
        if !(self.penalty_weight.is_finite() && self.penalty_weight >= 0.0) {
            return fail("penalty weight must be a non-negative number");
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return fail("sensitivity must be positive");
        }
        if self.confirm_steps == 0 || self.summary_cap == 0 {
            return fail("confirm steps and summary cap must be at least 1");
        }
        Ok(())
    }

    fn recommend_params(&self) -> RecommendParams {
        RecommendParams { bundle_size: self.bundle_size, penalty_weight: self.penalty_weight }
    }
}

/// What a decision is made against.
#[derive(Debug, Clone, Copy)]
pub struct Situation<'a> {
    pub state: &'a AbstractState,
    pub objective: &'a Objective,
    pub available: &'a BTreeSet<ConcreteAction>,
    pub rules: &'a RuleSet,
}

/// Asks the backend for an action. Any available action that passes the
/// feasibility rules is accepted, inside the bundle or not.
pub fn decide(
    sit: &Situation<'_>,
    bundle: &RecommendationBundle,
    history: &History,
    config: &RunConfig,
    backend: &mut dyn Backend,
) -> Result<ConcreteAction, BackendError> {
    let ctx = DecisionContext {
        state: sit.state.clone(),
        objective: sit.objective.describe(),
        bundle: bundle.entries.iter().map(|e| (e.action.canonical(), e.rationale())).collect(),
        history: history.summarize(config.summary_cap),
        constraints: DecisionContext::default_constraints(),
    };
    let prompt = build_decision_prompt(&ctx, config.token_budget)?;
    let text = backend.complete(&prompt)?;
    let action = parse_action(&text, sit.available)?;
    if validate(&action, sit.available, sit.state, sit.objective, sit.rules) {
        Ok(action)
    } else {
        Err(BackendError::Infeasible(action.canonical()))
    }
}

/// The highest-ranked bundle action.
pub fn fallback(bundle: &RecommendationBundle) -> Result<ConcreteAction, AgentError> {
    bundle.entries.first().map(|e| e.action.clone()).ok_or(AgentError::EmptyBundle)
}

/// Appends the step to the history and coverage memory. `to_key` is the
/// abstract state reached (none after a crash); returns the progress flag.
pub fn record_transition(
    history: &mut History,
    coverage: &mut CoverageMap,
    from_key: &str,
    action: &ConcreteAction,
    outcome: &Outcome,
    to_key: Option<&str>,
    key_gain: bool,
) -> bool {
    coverage.record(from_key, action, OutcomeTag::from(outcome.status));
    let new_node = to_key.is_some_and(|k| coverage.visit(k));
    let progress = outcome.status != OutcomeStatus::Crashed && (key_gain || new_node);
    history.push(HistoryEntry {
        step: 0,
        state_key: from_key.to_string(),
        action: action.clone(),
        outcome: outcome.status,
        duration_ms: outcome.duration_ms,
        log_line: outcome.log_line.clone(),
        progress,
    });
    progress
}

/// Runs one reflection. Backend or parse failures yield a conservative
/// interaction suspicion.
pub fn reflect(ctx: &ReflectionContext, backend: &mut dyn Backend) -> ReflectionOutcome {
    let prompt = build_reflection_prompt(ctx);
    let parsed = backend.complete(&prompt).and_then(|t| parse_reflection(&t));
    parsed.unwrap_or_else(|e| {
        ReflectionOutcome::bug(
            BugType::Interaction,
            vec!["reflection unavailable".into(), format!("backend error: {e}")],
            "Reflection could not be completed, so the stall is escalated.",
        )
        .expect("evidence is non-empty")
    })
}

/// Queues a revised plan; returns false for bug suspicions.
pub fn inject_plan(queue: &mut VecDeque<ConcreteAction>, outcome: &ReflectionOutcome) -> bool {
    match outcome {
        ReflectionOutcome::RevisedPlan { plan, .. } => {
            queue.clear();
            queue.extend(plan.iter().cloned());
            true
        }
        ReflectionOutcome::BugSuspected { .. } => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReflectionTrigger {
    NoProgress,
    Hung,
    Confirm,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionRecord {
    /// Number of history entries when reflection ran.
    pub after_steps: usize,
    /// Trailing no-progress count at that moment.
    pub stalled: usize,
    pub trigger: ReflectionTrigger,
    pub outcome: ReflectionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "detail")]
pub enum Termination {
    Completed,
    Crashed,
    Escalated,
    TimeLimit,
    EmptyBundle,
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub task_id: String,
    pub success: bool,
    pub termination: Termination,
    pub steps: usize,
    pub elapsed_ms: u64,
    pub visited: BTreeSet<String>,
    pub findings: Vec<Finding>,
    pub history: Vec<HistoryEntry>,
    pub reflections: Vec<ReflectionRecord>,
    /// Injected faults that fired, for ground-truth scoring.
    pub fault_events: Vec<FaultEvent>,
    pub backend_calls: usize,
}

impl RunResult {
    pub fn issues(&self) -> impl Iterator<Item = &Issue> {
        self.findings.iter().map(|f| &f.issue)
    }
}

/// Everything a run reads or updates besides the world itself.
pub struct Agent<'a> {
    pub meta: &'a GameMetadata,
    pub rules: &'a RuleSet,
    pub config: &'a RunConfig,
    pub backend: &'a mut dyn Backend,
    pub coverage: &'a mut CoverageMap,
    pub baseline: &'a mut TimingBaseline,
}

struct Counted<'a> {
    inner: &'a mut dyn Backend,
    calls: usize,
}

impl Backend for Counted<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        self.calls += 1;
        self.inner.complete(prompt)
    }
}

struct Observed {
    raw: RawState,
    state: AbstractState,
}

fn observe(world: &WorldState, meta: &GameMetadata) -> Result<Observed, String> {
    let raw = world.read_state().map_err(|e| e.to_string())?;
    let state = meta.abstract_state(&raw).map_err(|e| e.to_string())?;
    Ok(Observed { raw, state })
}

fn reflection_context(
    world: &WorldState,
    obs: &Observed,
    history: &History,
    coverage: &CoverageMap,
    config: &RunConfig,
    previous_reflections: usize,
) -> ReflectionContext {
    let spec = world.spec();
    let active = world.active_step().map(|s| s.id.clone());
    let truth = world.ground_truth();
    let step_status = truth
        .iter()
        .map(|t| {
            let phase = if t.completed {
                "done"
            } else if active.as_deref() == Some(t.id.as_str()) {
                "active"
            } else {
                "pending"
            };
            format!("{} {phase} {}/{}", t.id, t.counter, t.required)
        })
        .collect();
    let completed_steps = truth
        .iter()
        .zip(&spec.quest.steps)
        .filter(|(t, s)| t.completed && s.key_state)
        .map(|(t, _)| t.id.clone())
        .collect();
    let available = world.enumerate_actions().unwrap_or_default();
    let untried = available
        .iter()
        .filter(|a| coverage.stats(&obs.state.key, a).attempts == 0)
        .map(ConcreteAction::canonical)
        .collect();
    ReflectionContext {
        state: obs.state.clone(),
        objective: Objective::resolve(world),
        coords: obs.raw.player.coords,
        nearby_npcs: obs.raw.nearby_npcs.iter().map(|n| n.id.clone()).collect(),
        objects: obs.raw.nearby_objects.clone(),
        history: history.summarize(config.summary_cap),
        completed_steps,
        step_status,
        available: available.iter().map(ConcreteAction::canonical).collect(),
        untried,
        snapshot: world.capture_snapshot(),
        previous_reflections,
        coverage_nodes: coverage.node_count(),
    }
}

/// Runs the agent on one task until it completes, crashes, escalates past
/// the limit, or reaches the time limit.
///
/// Each iteration perceives, builds a recommendation bundle, decides and
/// executes, monitors progress (reflecting when stalled), then runs the
/// oracles on the new step.
pub fn run_task(world: &mut WorldState, agent: Agent<'_>) -> RunResult {
    let Agent { meta, rules, config, backend, coverage, baseline } = agent;
    let mut backend = Counted { inner: backend, calls: 0 };
    let spec = world.shared_spec();
    let task_id = spec.id.clone();
    let quest_id = spec.quest.id.clone();
    let expected_ms = baseline.expected_task_ms(&task_id);

    let mut history = History::new();
    let mut visited = BTreeSet::new();
    let mut findings: Vec<Finding> = Vec::new();
    let mut reflections: Vec<ReflectionRecord> = Vec::new();
    let mut plan: VecDeque<ConcreteAction> = VecDeque::new();
    let mut stall = 0usize;
    let mut escalation = 0usize;
    let mut confirming = false;
    let mut reflections_since_progress = 0usize;
    let mut elapsed_ms = 0u64;
    let mut last_progress_ms = 0u64;
    let mut best_key_progress = world.key_progress();
    let mut logic_latched = false;
    let mut task_time_latched = false;

    let mut current = match observe(world, meta) {
        Ok(o) => o,
        Err(e) => {
            return finish(world, baseline, task_id, Termination::Error(e), elapsed_ms, visited,
                findings, history, reflections, backend.calls)
        }
    };
    coverage.visit(&current.state.key);
    visited.insert(current.state.key.clone());

    let termination = loop {
        if world.task_complete(&quest_id).unwrap_or(false) {
            break Termination::Completed;
        }

        // Perceive.
        let available = match world.enumerate_actions() {
            Ok(a) => a,
            Err(_) => break Termination::Crashed,
        };
        let objective = Objective::resolve(world);

        if world.tick() >= config.time_limit {
            let ctx = reflection_context(world, &current, &history, coverage, config,
                reflections_since_progress);
            let outcome = reflect(&ctx, &mut backend);
            if let Some(f) = make_stuck_diagnosis(&task_id, &outcome, &current.state,
                history.entries(), &ctx.snapshot, &objective)
            {
                findings.push(f);
            }
            reflections.push(ReflectionRecord {
                after_steps: history.len(),
                stalled: history.trailing_no_progress(),
                trigger: ReflectionTrigger::TimeLimit,
                outcome,
            });
            break Termination::TimeLimit;
        }

        // Optimize.
        let feasible = filter_feasible(&instantiate_templates(&available), &current.state, &objective, rules);
        let sit = Situation { state: &current.state, objective: &objective, available: &available, rules };

        // Decide and act; a queued plan takes priority over the backend.
        let mut chosen = None;
        while let Some(a) = plan.pop_front() {
            if validate(&a, &available, &current.state, &objective, rules) {
                chosen = Some(a);
                break;
            }
            plan.clear();
        }
        let action = match chosen {
            Some(a) => a,
            None => {
                let rerank: Option<&mut dyn Backend> = if config.rerank { Some(&mut backend) } else { None };
                let bundle = match recommend(&current.state, &objective, &feasible, coverage, rules,
                    &config.recommend_params(), rerank)
                {
                    Ok(b) => b,
                    Err(_) => break Termination::EmptyBundle,
                };
                match decide(&sit, &bundle, &history, config, &mut backend) {
                    Ok(a) => a,
                    Err(_) => match fallback(&bundle) {
                        Ok(a) => a,
                        Err(_) => break Termination::EmptyBundle,
                    },
                }
            }
        };
        let pre = current;
        let pre_snapshot = world.capture_snapshot();
        let outcome = world.execute(&action);
        elapsed_ms += outcome.duration_ms;
        baseline.observe(action.template(), outcome.duration_ms);

        let kp = world.key_progress();
        let key_gain = kp > best_key_progress + 1e-12;
        best_key_progress = best_key_progress.max(kp);
        let post = if world.is_crashed() { None } else { observe(world, meta).ok() };
        let to_key = post.as_ref().map(|o| o.state.key.clone());
        let progress = record_transition(&mut history, coverage, &pre.state.key, &action, &outcome,
            to_key.as_deref(), key_gain);
        if let Some(k) = to_key {
            visited.insert(k);
        }

        if outcome.status == OutcomeStatus::Crashed {
            let f = crash_check(&task_id, &outcome, history.entries(), &pre.state, &objective, &pre_snapshot)
                .expect("crashed outcome yields an issue");
            findings.push(f);
            break Termination::Crashed;
        }
        current = match post {
            Some(o) => o,
            None => break Termination::Error("state could not be perceived".into()),
        };

        // Monitor and reflect.
        if progress {
            stall = 0;
            escalation = 0;
            confirming = false;
            reflections_since_progress = 0;
            last_progress_ms = elapsed_ms;
        } else {
            stall += 1;
        }
        let trigger = if outcome.status == OutcomeStatus::Hung {
            Some(ReflectionTrigger::Hung)
        } else if confirming && stall >= config.confirm_steps {
            Some(ReflectionTrigger::Confirm)
        } else if stall >= config.reflect_threshold {
            Some(ReflectionTrigger::NoProgress)
        } else {
            None
        };
        if let Some(trigger) = trigger {
            let ctx = reflection_context(world, &current, &history, coverage, config,
                reflections_since_progress);
            let refl = reflect(&ctx, &mut backend);
            reflections.push(ReflectionRecord {
                after_steps: history.len(),
                stalled: history.trailing_no_progress(),
                trigger,
                outcome: refl.clone(),
            });
            stall = 0;
            reflections_since_progress += 1;
            if !inject_plan(&mut plan, &refl) {
                let objective = Objective::resolve(world);
                if let Some(f) = make_stuck_diagnosis(&task_id, &refl, &current.state, history.entries(),
                    &ctx.snapshot, &objective)
                {
                    findings.push(f);
                }
                escalation += 1;
                confirming = true;
                plan.clear();
                if escalation >= config.escalation_limit {
                    break Termination::Escalated;
                }
            }
        }

        // Oracles.
        let entry = history.last().expect("step recorded").clone();
        let objective = Objective::resolve(world);
        if let Some(issue) = time_check(&task_id, &entry, baseline, config.sensitivity) {
            let report = basic_report(&issue, history.entries(), &objective);
            findings.push(Finding::new(issue, report));
        }
        if !logic_latched {
            if let Some(f) = logic_check(&task_id, history.entries(), world) {
                logic_latched = true;
                findings.push(f);
            }
        }
        if !task_time_latched {
            let progress_in_overrun = expected_ms.is_some_and(|e| last_progress_ms > e);
            if let Some(issue) = task_time_check(&task_id, entry.step, elapsed_ms, expected_ms,
                config.sensitivity, progress_in_overrun)
            {
                task_time_latched = true;
                let report = basic_report(&issue, history.entries(), &objective);
                findings.push(Finding::new(issue, report));
            }
        }
    };
    finish(world, baseline, task_id, termination, elapsed_ms, visited, findings, history,
        reflections, backend.calls)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    world: &WorldState,
    baseline: &mut TimingBaseline,
    task_id: String,
    termination: Termination,
    elapsed_ms: u64,
    visited: BTreeSet<String>,
    findings: Vec<Finding>,
    history: History,
    reflections: Vec<ReflectionRecord>,
    backend_calls: usize,
) -> RunResult {
    let success = !world.is_crashed() && world.task_complete(&world.spec().quest.id).unwrap_or(false);
    baseline.finish_run(&task_id, elapsed_ms, success);
    RunResult {
        task_id,
        success,
        termination,
        steps: history.len(),
        elapsed_ms,
        visited,
        findings,
        history: history.entries().to_vec(),
        reflections,
        fault_events: world.fault_log().to_vec(),
        backend_calls,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action_space::fixtures::three_rules;
    use crate::backend::{MockGreedy, MockScripted, Script};
    use crate::perception::fixtures::basic;
    use crate::sim::fixtures::minimal_talk;

    fn a(s: &str) -> ConcreteAction {
        s.parse().unwrap()
    }

    fn bundle(actions: &[&str]) -> RecommendationBundle {
        RecommendationBundle {
            entries: actions
                .iter()
                .map(|s| crate::action_space::BundleEntry {
                    action: a(s),
                    score: 0.0,
                    rules: vec![],
                    penalty: 0.0,
                    tried: 0,
                    failed: 0,
                })
                .collect(),
            backend_note: None,
        }
    }

    #[test]
    fn fallback_takes_rank_one() {
        assert_eq!(fallback(&bundle(&["Talk(to=a)", "Talk(to=b)"])).unwrap(), a("Talk(to=a)"));
        assert_eq!(fallback(&bundle(&[])), Err(AgentError::EmptyBundle));
    }

    #[test]
    fn record_transition_flags_first_visit() {
        let mut h = History::new();
        let mut c = CoverageMap::new("f");
        c.visit("s0");
        let o = Outcome { status: OutcomeStatus::NoChange, duration_ms: 5, log_line: String::new() };
        let act = a("Explore(north)");
        assert!(record_transition(&mut h, &mut c, "s0", &act, &o, Some("s1"), false));
        assert!(!record_transition(&mut h, &mut c, "s1", &act, &o, Some("s1"), false));
        assert_eq!(c.visits("s1"), 2);
        let crash = Outcome { status: OutcomeStatus::Crashed, duration_ms: 5, log_line: String::new() };
        assert!(!record_transition(&mut h, &mut c, "s1", &act, &crash, None, true));
        assert_eq!(c.stats("s1", &act).bug, 1);
    }

    #[test]
    fn plan_injection_replaces_queue() {
        let mut q = VecDeque::from([a("Explore(south)")]);
        let plan = ReflectionOutcome::plan(vec![a("Move(to=x)"), a("Talk(to=y)")], "").unwrap();
        assert!(inject_plan(&mut q, &plan));
        assert_eq!(q, VecDeque::from([a("Move(to=x)"), a("Talk(to=y)")]));
        let bug = ReflectionOutcome::bug(BugType::Hang, vec!["e".into()], "").unwrap();
        assert!(!inject_plan(&mut q, &bug));
    }

    #[test]
    fn reflection_failure_is_conservative() {
        let w = WorldState::new(minimal_talk()).unwrap();
        let obs = observe(&w, &basic()).unwrap();
        let ctx = reflection_context(&w, &obs, &History::new(), &CoverageMap::new("f"), &RunConfig::default(), 0);
        let mut m = MockScripted::new(Script::default());
        let out = reflect(&ctx, &mut m);
        match out {
            ReflectionOutcome::BugSuspected { suspicion, .. } => {
                assert_eq!(suspicion.evidence[0], "reflection unavailable")
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decide_accepts_off_bundle_feasible_action() {
        let w = WorldState::new(minimal_talk()).unwrap();
        let obs = observe(&w, &basic()).unwrap();
        let avail = w.enumerate_actions().unwrap();
        let obj = Objective::resolve(&w);
        let rules = three_rules();
        let sit = Situation { state: &obs.state, objective: &obj, available: &avail, rules: &rules };
        let b = bundle(&["Talk(to=guard)"]);
        let h = History::new();
        let cfg = RunConfig::default();
        let ctx = DecisionContext {
            state: obs.state.clone(),
            objective: obj.describe(),
            bundle: b.entries.iter().map(|e| (e.action.canonical(), e.rationale())).collect(),
            history: h.summarize(cfg.summary_cap),
            constraints: DecisionContext::default_constraints(),
        };
        let prompt = build_decision_prompt(&ctx, cfg.token_budget).unwrap();
        let mut m = MockScripted::new(Script::default());
        m.register(&prompt, "Explore(direction=north)");
        assert_eq!(decide(&sit, &b, &h, &cfg, &mut m).unwrap(), a("Explore(north)"));
        m.register(&prompt, "I am not sure.");
        assert!(matches!(decide(&sit, &b, &h, &cfg, &mut m), Err(BackendError::Unparseable(_))));
        let mut g = MockGreedy::new();
        assert_eq!(decide(&sit, &b, &h, &cfg, &mut g).unwrap(), a("Talk(to=guard)"));
    }

    #[test]
    fn simple_task_completes_without_issues() {
        let mut w = WorldState::new(minimal_talk()).unwrap();
        let meta = basic();
        let rules = three_rules();
        let cfg = RunConfig::default();
        let mut backend = MockGreedy::new();
        let mut cov = CoverageMap::new("f");
        let mut base = TimingBaseline::new("f");
        let r = run_task(&mut w, Agent {
            meta: &meta,
            rules: &rules,
            config: &cfg,
            backend: &mut backend,
            coverage: &mut cov,
            baseline: &mut base,
        });
        assert!(r.success, "{r:?}");
        assert_eq!(r.termination, Termination::Completed);
        assert!(r.findings.is_empty());
        assert!(!base.first_run);
    }

    #[test]
    fn config_invariants() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig { reflect_threshold: 0, ..RunConfig::default() };
        assert!(bad.validate().is_err());
    }
}
