//! Suite runner: repeated runs per scenario, SR/CV/#Bug metrics, and
//! scoring of issues against injected-fault ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_space::{ActionSpaceError, RuleSet};
use crate::agent::{run_task, Agent, CoverageMap, RunConfig, RunResult, StorageError, Termination};
use crate::backend::{BackendError, BackendParams};
use crate::oracles::{
    emit_report, Finding, Issue, IssueKind, OracleError, ReportFormat, TimingBaseline,
};
use crate::perception::{GameMetadata, PerceptionError};
use crate::sim::{
    full_state_graph, Difficulty, FaultEvent, ReachabilityGraph, ScenarioSpec, SimError,
    WorldState, CRASH_NODE, DEFAULT_STATE_CAP,
};

pub const SUITE_SCHEMA: &str = "suite-v1";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Scenario { path: PathBuf, source: SimError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Rules(#[from] ActionSpaceError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Report(#[from] OracleError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("visited state `{0}` is not in the reachable set")]
    UnreachableVisited(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Scenario files, or directories whose `*.json` files are scenarios.
    pub scenarios: Vec<PathBuf>,
    pub metadata: PathBuf,
    /// No rules file means every available action is feasible and unranked.
    pub rules: Option<PathBuf>,
    pub runs: usize,
    /// Mixed into every scenario seed.
    pub seed: u64,
    pub backend: BackendParams,
    pub run: RunConfig,
    /// Reports, suite summary and persisted memory go here when set.
    pub out: Option<PathBuf>,
    /// Score issues against injected faults.
    pub ground_truth: bool,
    pub state_cap: usize,
}

impl SuiteConfig {
    pub fn new(scenarios: Vec<PathBuf>, metadata: PathBuf, backend: BackendParams) -> Self {
        SuiteConfig {
            scenarios,
            metadata,
            rules: None,
            runs: 5,
            seed: 0,
            backend,
            run: RunConfig::default(),
            out: None,
            ground_truth: true,
            state_cap: DEFAULT_STATE_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.scenarios.is_empty() {
            return Err(HarnessError::Config("no scenarios given".into()));
        }
        if self.runs == 0 {
            return Err(HarnessError::Config("runs per task must be at least 1".into()));
        }
        for p in &self.scenarios {
            if !p.exists() {
                return Err(HarnessError::Config(format!("scenario path {} does not exist", p.display())));
            }
        }
        self.run.validate().map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Loaded inputs of a suite.
#[derive(Debug, Clone)]
pub struct Suite {
    pub specs: Vec<ScenarioSpec>,
    pub meta: GameMetadata,
    pub rules: RuleSet,
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Expands directories into their `*.json` files, sorted by name.
pub fn scenario_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .map_err(io_err(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, HarnessError> {
    ScenarioSpec::from_json(&read(path)?)
        .map_err(|source| HarnessError::Scenario { path: path.to_path_buf(), source })
}

pub fn load_metadata(path: &Path) -> Result<GameMetadata, HarnessError> {
    Ok(GameMetadata::from_json(&read(path)?)?)
}

pub fn load_rules(path: &Path, meta: &GameMetadata) -> Result<RuleSet, HarnessError> {
    Ok(RuleSet::from_json(&read(path)?, meta)?)
}

impl Suite {
    pub fn load(config: &SuiteConfig) -> Result<Suite, HarnessError> {
        config.validate()?;
        let meta = load_metadata(&config.metadata)?;
        let rules = match &config.rules {
            Some(p) => load_rules(p, &meta)?,
            None => RuleSet::default(),
        };
        let specs = scenario_files(&config.scenarios)?
            .iter()
            .map(|p| load_scenario(p))
            .collect::<Result<Vec<_>, _>>()?;
        if specs.is_empty() {
            return Err(HarnessError::Config("scenario directories contain no scenarios".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &specs {
            if !ids.insert(s.id.as_str()) {
                return Err(HarnessError::Config(format!("duplicate scenario id `{}`", s.id)));
            }
        }
        Ok(Suite { specs, meta, rules })
    }
}

/// Reachability graph over the abstract keys produced by `meta`.
pub fn reachable(spec: &ScenarioSpec, meta: &GameMetadata, cap: usize) -> Result<ReachabilityGraph, SimError> {
    full_state_graph(
        spec,
        |raw| match meta.abstract_state(raw) {
            Ok(s) => s.key,
            Err(e) => format!("<unperceivable: {e}>"),
        },
        cap,
    )
}

/// `100 * |visited ∩ reachable| / |reachable|`. A visited key outside the
/// reachable set means the abstraction and the oracle disagree, which is an error.
pub fn compute_cv(visited: &BTreeSet<String>, graph: &ReachabilityGraph) -> Result<f64, HarnessError> {
    let reachable: BTreeSet<&str> =
        graph.nodes.iter().map(String::as_str).filter(|k| *k != CRASH_NODE).collect();
    if let Some(k) = visited.iter().find(|k| !reachable.contains(k.as_str())) {
        return Err(HarnessError::UnreachableVisited(k.clone()));
    }
    if reachable.is_empty() {
        return Ok(0.0);
    }
    Ok(100.0 * visited.len() as f64 / reachable.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmedBug {
    pub fault_id: String,
    pub fault_kind: String,
    pub issue_kind: IssueKind,
    pub run: usize,
    pub step: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dedupe {
    /// One entry per distinct fault, first detection wins.
    pub confirmed: Vec<ConfirmedBug>,
    pub false_alarms: usize,
    /// Matched fault id per input issue, `None` for false alarms.
    pub matches: Vec<Option<String>>,
}

fn compatible(issue: IssueKind, fault_kind: &str) -> bool {
    match issue {
        IssueKind::Crash => fault_kind == "crash",
        IssueKind::Stuck => fault_kind == "hang-interaction",
        IssueKind::LogicAnomaly => matches!(fault_kind, "logic-step-count" | "missing-collider"),
        IssueKind::TimeAnomaly => fault_kind == "delay",
    }
}

/// Matches `(run, issue)` pairs to `(run, fault event)` pairs of the same
/// run. Crashes must coincide with the crash step; other kinds need a
/// compatible fault that fired at or before the issue's step.
pub fn dedupe_bugs(issues: &[(usize, Issue)], faults: &[(usize, FaultEvent)]) -> Dedupe {
    let mut out = Dedupe::default();
    let mut seen = BTreeSet::new();
    for (run, issue) in issues {
        let hit = faults.iter().find(|(r, f)| {
            *r == *run
                && compatible(issue.kind, &f.kind)
                && if issue.kind == IssueKind::Crash {
                    f.step as usize == issue.step
                } else {
                    f.step as usize <= issue.step
                }
        });
        match hit {
            Some((_, f)) => {
                if seen.insert(f.fault_id.clone()) {
                    out.confirmed.push(ConfirmedBug {
                        fault_id: f.fault_id.clone(),
                        fault_kind: f.kind.clone(),
                        issue_kind: issue.kind,
                        run: *run,
                        step: issue.step,
                    });
                }
                out.matches.push(Some(f.fault_id.clone()));
            }
            None => {
                out.false_alarms += 1;
                out.matches.push(None);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub success: bool,
    pub termination: Termination,
    pub steps: usize,
    pub elapsed_ms: u64,
    pub visited: usize,
    pub reflections: usize,
    pub issues: Vec<Issue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub family: String,
    pub difficulty: Difficulty,
    pub reachable_states: usize,
    pub reachable_actions: usize,
    pub completable: bool,
    pub injected_faults: Vec<String>,
    /// A crash fault sits on the quest path, so success is not expected.
    pub crash_blocked: bool,
    pub runs: Vec<RunSummary>,
    pub successes: usize,
    pub sr: f64,
    pub visited_states: usize,
    pub cv: f64,
    pub bugs: usize,
    pub confirmed: Vec<ConfirmedBug>,
    pub false_alarms: usize,
    /// Mean simulated minutes per run.
    pub time_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub backend: String,
    pub runs: usize,
    pub seed: u64,
    pub reflect_threshold: usize,
    pub escalations: usize,
    pub time_limit: u64,
    pub sensitivity: f64,
    pub bundle_size: usize,
    pub ground_truth: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub label: String,
    pub tasks: usize,
    pub sr: f64,
    pub cv: f64,
    pub bugs: usize,
    pub injected: usize,
    pub false_alarms: usize,
    pub time_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: String,
    pub config: ConfigEcho,
    pub tasks: Vec<TaskReport>,
    pub by_difficulty: Vec<Totals>,
    pub total: Totals,
}

/// The report plus every raw run result, in scenario order.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: SuiteReport,
    pub results: Vec<Vec<RunResult>>,
    pub graphs: Vec<Option<ReachabilityGraph>>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn totals<'a>(label: &str, tasks: impl Iterator<Item = &'a TaskReport>) -> Totals {
    let tasks: Vec<&TaskReport> = tasks.collect();
    Totals {
        label: label.to_string(),
        tasks: tasks.len(),
        sr: mean(tasks.iter().map(|t| t.sr)),
        cv: mean(tasks.iter().map(|t| t.cv)),
        bugs: tasks.iter().map(|t| t.bugs).sum(),
        injected: tasks.iter().map(|t| t.injected_faults.len()).sum(),
        false_alarms: tasks.iter().map(|t| t.false_alarms).sum(),
        time_min: tasks.iter().map(|t| t.time_min).sum(),
    }
}

fn memory_paths(out: &Path, family: &str) -> (PathBuf, PathBuf) {
    let dir = out.join("memory");
    (dir.join(format!("{family}.coverage.json")), dir.join(format!("{family}.baseline.json")))
}

struct TaskOutcome {
    report: TaskReport,
    runs: Vec<RunResult>,
    graph: Option<ReachabilityGraph>,
}

fn run_family(
    specs: &[(usize, Arc<ScenarioSpec>)],
    suite: &Suite,
    config: &SuiteConfig,
) -> Result<Vec<(usize, TaskOutcome)>, HarnessError> {
    let family = specs[0].1.family().to_string();
    let (mut coverage, mut baseline, paths) = match &config.out {
        Some(out) => {
            let (c, b) = memory_paths(out, &family);
            (CoverageMap::load(&c, &family)?, TimingBaseline::load(&b, &family)?, Some((c, b)))
        }
        None => (CoverageMap::new(&family), TimingBaseline::new(&family), None),
    };
    let mut out = Vec::new();
    for (index, spec) in specs {
        let mut runs = Vec::new();
        let mut error = None;
        for _ in 0..config.runs {
            let mut backend = match config.backend.build() {
                Ok(b) => b,
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            };
            let mut world = WorldState::from_shared(Arc::clone(spec))?;
            let result = run_task(
                &mut world,
                Agent {
                    meta: &suite.meta,
                    rules: &suite.rules,
                    config: &config.run,
                    backend: backend.as_mut(),
                    coverage: &mut coverage,
                    baseline: &mut baseline,
                },
            );
            if let Some((c, b)) = &paths {
                coverage.persist(c)?;
                baseline.persist(b)?;
            }
            runs.push(result);
        }
        let graph = reachable(spec, &suite.meta, config.state_cap);
        let mut task = match score_task(spec, &mut runs, graph.as_ref().ok(), config.ground_truth) {
            Ok(t) => t,
            Err(e) => {
                let mut t = score_task(spec, &mut runs, None, config.ground_truth)?;
                t.error = Some(e.to_string());
                t
            }
        };
        if let Err(e) = &graph {
            task.error.get_or_insert_with(|| e.to_string());
        }
        if let Some(e) = error {
            task.error.get_or_insert(e);
        }
        out.push((*index, TaskOutcome { report: task, runs, graph: graph.ok() }));
    }
    Ok(out)
}

/// Metrics for one task; also stamps confirmation flags onto the issues.
pub fn score_task(
    spec: &ScenarioSpec,
    runs: &mut [RunResult],
    graph: Option<&ReachabilityGraph>,
    ground_truth: bool,
) -> Result<TaskReport, HarnessError> {
    let visited: BTreeSet<String> = runs.iter().flat_map(|r| r.visited.iter().cloned()).collect();
    let cv = match graph {
        Some(g) => compute_cv(&visited, g)?,
        None => 0.0,
    };
    let issues: Vec<(usize, Issue)> = runs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.issues().map(move |x| (i, x.clone())))
        .collect();
    let faults: Vec<(usize, FaultEvent)> = runs
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.fault_events.iter().map(move |f| (i, f.clone())))
        .collect();
    let dedupe = if ground_truth { dedupe_bugs(&issues, &faults) } else { Dedupe::default() };
    if ground_truth {
        let mut m = dedupe.matches.iter();
        for r in runs.iter_mut() {
            for f in &mut r.findings {
                let hit = m.next().cloned().flatten();
                f.issue.confirmed = Some(hit.is_some());
                f.issue.fault_id = hit;
            }
        }
    }
    let successes = runs.iter().filter(|r| r.success).count();
    let summaries = runs
        .iter()
        .enumerate()
        .map(|(i, r)| RunSummary {
            run: i,
            success: r.success,
            termination: r.termination.clone(),
            steps: r.steps,
            elapsed_ms: r.elapsed_ms,
            visited: r.visited.len(),
            reflections: r.reflections.len(),
            issues: r.issues().cloned().collect(),
        })
        .collect();
    Ok(TaskReport {
        task_id: spec.id.clone(),
        family: spec.family().to_string(),
        difficulty: spec.difficulty,
        reachable_states: graph.map_or(0, |g| g.nodes.len()),
        reachable_actions: graph.map_or(0, |g| g.effective_actions().len()),
        completable: graph.is_some_and(|g| g.completable),
        injected_faults: spec.faults.iter().map(|f| f.id.clone()).collect(),
        crash_blocked: spec.faults.iter().any(|f| f.kind == crate::sim::FaultKind::Crash),
        runs: summaries,
        successes,
        sr: if runs.is_empty() { 0.0 } else { 100.0 * successes as f64 / runs.len() as f64 },
        visited_states: visited.len(),
        cv,
        bugs: dedupe.confirmed.len(),
        confirmed: dedupe.confirmed,
        false_alarms: dedupe.false_alarms,
        time_min: mean(runs.iter().map(|r| r.elapsed_ms as f64 / 60_000.0)),
        error: None,
    })
}

/// Runs every scenario `runs` times. Families run in parallel; tasks of
/// one family run in order so they share coverage memory and baselines.
pub fn run_loaded(suite: &Suite, config: &SuiteConfig) -> Result<SuiteRun, HarnessError> {
    config.run.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut groups: BTreeMap<String, Vec<(usize, Arc<ScenarioSpec>)>> = BTreeMap::new();
    for (i, s) in suite.specs.iter().enumerate() {
        let mut s = s.clone();
        s.seed ^= config.seed;
        groups.entry(s.family().to_string()).or_default().push((i, Arc::new(s)));
    }
    let groups: Vec<Vec<(usize, Arc<ScenarioSpec>)>> = groups.into_values().collect();
    let done: Vec<Result<Vec<(usize, TaskOutcome)>, HarnessError>> =
        groups.par_iter().map(|g| run_family(g, suite, config)).collect();
    let mut slots: Vec<Option<TaskOutcome>> = (0..suite.specs.len()).map(|_| None).collect();
    for group in done {
        for (i, t) in group? {
            slots[i] = Some(t);
        }
    }
    let outcomes: Vec<TaskOutcome> = slots.into_iter().map(|t| t.expect("every task ran")).collect();
    let tasks: Vec<TaskReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let by_difficulty = [Difficulty::Simple, Difficulty::Normal, Difficulty::Hard]
        .iter()
        .filter(|d| tasks.iter().any(|t| t.difficulty == **d))
        .map(|d| totals(&format!("{d:?}"), tasks.iter().filter(|t| t.difficulty == *d)))
        .collect();
    let report = SuiteReport {
        schema: SUITE_SCHEMA.into(),
        config: ConfigEcho {
            backend: config.backend.kind.as_str().into(),
            runs: config.runs,
            seed: config.seed,
            reflect_threshold: config.run.reflect_threshold,
            escalations: config.run.escalation_limit,
            time_limit: config.run.time_limit,
            sensitivity: config.run.sensitivity,
            bundle_size: config.run.bundle_size,
            ground_truth: config.ground_truth,
        },
        total: totals("Total", tasks.iter()),
        by_difficulty,
        tasks,
    };
    let (results, graphs) = outcomes.into_iter().map(|o| (o.runs, o.graph)).unzip();
    let run = SuiteRun { report, results, graphs };
    if let Some(out) = &config.out {
        write_outputs(out, &run)?;
    }
    Ok(run)
}

pub fn run_suite(config: &SuiteConfig) -> Result<SuiteRun, HarnessError> {
    let suite = Suite::load(config)?;
    run_loaded(&suite, config)
}

fn write_outputs(out: &Path, run: &SuiteRun) -> Result<(), HarnessError> {
    let reports = out.join("reports");
    fs::create_dir_all(&reports).map_err(io_err(&reports))?;
    for runs in &run.results {
        for (i, r) in runs.iter().enumerate() {
            for (n, f) in r.findings.iter().enumerate() {
                let stem = format!("{}-run{}-{:02}-{}", r.task_id, i, n, f.issue.kind.as_str());
                write_finding(&reports, &stem, f)?;
            }
        }
    }
    let json = out.join("suite.json");
    fs::write(&json, serde_json::to_string_pretty(&run.report).expect("report serializes"))
        .map_err(io_err(&json))?;
    let md = out.join("suite.md");
    fs::write(&md, render_suite_markdown(&run.report)).map_err(io_err(&md))?;
    Ok(())
}

fn write_finding(dir: &Path, stem: &str, f: &Finding) -> Result<(), HarnessError> {
    for (fmt, ext) in [(ReportFormat::Json, "json"), (ReportFormat::Markdown, "md")] {
        let path = dir.join(format!("{stem}.{ext}"));
        let mut file = fs::File::create(&path).map_err(io_err(&path))?;
        emit_report(f, fmt, &mut file)?;
    }
    Ok(())
}

pub fn render_suite_markdown(r: &SuiteReport) -> String {
    let c = &r.config;
    let mut out = String::from("# Suite report\n\n");
    let _ = writeln!(
        out,
        "backend {} | runs {} | seed {} | reflect-threshold {} | escalations {} | time-limit {} | \
         sensitivity {} | bundle-size {} | ground-truth {}\n",
        c.backend, c.runs, c.seed, c.reflect_threshold, c.escalations, c.time_limit, c.sensitivity,
        c.bundle_size, c.ground_truth
    );
    out.push_str("| Task | Difficulty | SR (%) | CV (%) | #Bug | Time (m) |\n");
    out.push_str("|---|---|---:|---:|---:|---:|\n");
    for t in &r.tasks {
        let _ = writeln!(
            out,
            "| {} | {:?} | {:.2} | {:.2} | {}/{} | {:.2} |",
            t.task_id,
            t.difficulty,
            t.sr,
            t.cv,
            t.bugs,
            t.injected_faults.len(),
            t.time_min
        );
    }
    for t in r.by_difficulty.iter().chain(std::iter::once(&r.total)) {
        let _ = writeln!(
            out,
            "| **{}** | {} tasks | {:.2} | {:.2} | {}/{} | {:.2} |",
            t.label, t.tasks, t.sr, t.cv, t.bugs, t.injected, t.time_min
        );
    }
    let _ = writeln!(out, "\nFalse alarms: {}", r.total.false_alarms);
    let errors: Vec<&TaskReport> = r.tasks.iter().filter(|t| t.error.is_some()).collect();
    if !errors.is_empty() {
        out.push_str("\nErrors:\n");
        for t in errors {
            let _ = writeln!(out, "- {}: {}", t.task_id, t.error.as_deref().unwrap_or_default());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::Severity;

    fn graph(nodes: &[&str]) -> ReachabilityGraph {
        ReachabilityGraph {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: BTreeSet::new(),
            completable: true,
            world_states: nodes.len(),
        }
    }

    fn keys(ks: &[&str]) -> BTreeSet<String> {
        ks.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cv_ratios() {
        let g = graph(&["a", "b", "c", "d", "e", "f", "g", "h", "i"]);
        assert_eq!(compute_cv(&keys(&["a", "b", "c", "d", "e", "f", "g", "h", "i"]), &g).unwrap(), 100.0);
        let cv = compute_cv(&keys(&["a", "b", "c", "d", "e", "f", "g"]), &g).unwrap();
        assert!((cv - 77.78).abs() < 0.01);
        assert!(matches!(compute_cv(&keys(&["zz"]), &g), Err(HarnessError::UnreachableVisited(_))));
    }

    fn issue(kind: IssueKind, step: usize) -> Issue {
        Issue {
            kind,
            task_id: "t".into(),
            step,
            severity: Severity::Medium,
            summary: "s".into(),
            bug_type: None,
            action: None,
            trace: vec![],
            confirmed: None,
            fault_id: None,
        }
    }

    fn event(id: &str, kind: &str, step: u64) -> FaultEvent {
        FaultEvent { fault_id: id.into(), kind: kind.into(), step }
    }

    #[test]
    fn crash_at_trigger_is_confirmed() {
        let d = dedupe_bugs(&[(0, issue(IssueKind::Crash, 4))], &[(0, event("c", "crash", 4))]);
        assert_eq!(d.confirmed.len(), 1);
        assert_eq!(d.false_alarms, 0);
    }

    #[test]
    fn time_anomaly_without_delay_is_false_alarm() {
        let d = dedupe_bugs(&[(0, issue(IssueKind::TimeAnomaly, 4))], &[(0, event("c", "crash", 4))]);
        assert_eq!(d.confirmed.len(), 0);
        assert_eq!(d.false_alarms, 1);
    }

    #[test]
    fn two_stuck_issues_one_hang() {
        let d = dedupe_bugs(
            &[(0, issue(IssueKind::Stuck, 4)), (0, issue(IssueKind::Stuck, 5))],
            &[(0, event("h", "hang-interaction", 4))],
        );
        assert_eq!(d.confirmed.len(), 1);
        assert_eq!(d.false_alarms, 0);
    }

    #[test]
    fn faults_only_match_their_own_run() {
        let d = dedupe_bugs(&[(1, issue(IssueKind::Crash, 4))], &[(0, event("c", "crash", 4))]);
        assert_eq!(d.false_alarms, 1);
    }

    #[test]
    fn empty_scenario_list_is_a_config_error() {
        let cfg = SuiteConfig::new(vec![], "m.json".into(), BackendParams::new(crate::backend::BackendKind::MockGreedy));
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
    }
}
