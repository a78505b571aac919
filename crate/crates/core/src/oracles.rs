//! Issue diagnosis: crash, stuck, timing and quest-logic oracles plus report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ConcreteAction, Template};
use crate::agent::{
    read_locked, write_locked, BugType, HistoryEntry, Objective, ReflectionOutcome,
    StorageError,
};
use crate::perception::AbstractState;
use crate::sim::{Outcome, OutcomeStatus, Snapshot, WorldState, OUT_OF_WORLD};

pub const REPORT_SCHEMA: &str = "report-v1";
pub const BASELINE_SCHEMA: &str = "baseline-v1";
pub const DEFAULT_SENSITIVITY: f64 = 3.0;
/// Standard deviations above the mean that a duration must also exceed.
const SIGMA_MARGIN: f64 = 3.0;
/// History lines quoted in a report.
const REPORT_TRACE: usize = 10;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("report sink is not writable: {0}")]
    SinkUnwritable(String),
    #[error("report document is invalid: {0}")]
    ReportInvalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Crash,
    Stuck,
    TimeAnomaly,
    LogicAnomaly,
}

impl IssueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueKind::Crash => "crash",
            IssueKind::Stuck => "stuck",
            IssueKind::TimeAnomaly => "time-anomaly",
            IssueKind::LogicAnomaly => "logic-anomaly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    High,
    Medium,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub kind: IssueKind,
    pub task_id: String,
    /// History index of the step that raised the issue.
    pub step: usize,
    pub severity: Severity,
    pub summary: String,
    /// Suspected bug type when the issue came from reflection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_type: Option<BugType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ConcreteAction>,
    /// State and action trace leading to the issue, oldest first.
    #[serde(default)]
    pub trace: Vec<String>,
    /// Set by the harness in ground-truth mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_id: Option<String>,
}

impl Issue {
    fn new(kind: IssueKind, task_id: &str, step: usize, summary: String) -> Self {
        let severity = match kind {
            IssueKind::Crash | IssueKind::LogicAnomaly => Severity::High,
            IssueKind::Stuck | IssueKind::TimeAnomaly => Severity::Medium,
        };
        Issue {
            kind,
            task_id: task_id.to_string(),
            step,
            severity,
            summary,
            bug_type: None,
            action: None,
            trace: Vec::new(),
            confirmed: None,
            fault_id: None,
        }
    }
}

/// The four-part write-up handed to a human tester.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub task_description: String,
    pub attempted_actions: String,
    pub analysis: String,
    pub evidence: Vec<String>,
}

impl DiagnosisReport {
    pub fn is_complete(&self) -> bool {
        !self.task_description.trim().is_empty()
            && !self.attempted_actions.trim().is_empty()
            && !self.analysis.trim().is_empty()
            && self.evidence.iter().any(|e| !e.trim().is_empty())
    }
}

/// An issue with its report, as written to disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub schema: String,
    pub issue: Issue,
    pub report: DiagnosisReport,
}

impl Finding {
    pub fn new(issue: Issue, report: DiagnosisReport) -> Self {
        Finding { schema: REPORT_SCHEMA.into(), issue, report }
    }
}

fn attempted_summary(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "no actions were executed".into();
    }
    let mut per_action: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for e in history {
        let slot = per_action.entry(e.action.canonical()).or_default();
        slot.0 += 1;
        slot.1 += e.progress as usize;
    }
    let progress = history.iter().filter(|e| e.progress).count();
    let mut out = format!("{} actions executed, {progress} with progress.", history.len());
    let mut ranked: Vec<_> = per_action.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
    for (action, (n, p)) in ranked.into_iter().take(5) {
        let _ = write!(out, " {action} x{n} ({p} progress);");
    }
    out.trim_end_matches(';').to_string()
}

fn trace(history: &[HistoryEntry]) -> Vec<String> {
    let skip = history.len().saturating_sub(REPORT_TRACE);
    history[skip..]
        .iter()
        .map(|e| format!("{} @ {} ({} ms)", e.line(), e.state_key, e.duration_ms))
        .collect()
}

fn snapshot_lines(snapshot: &Snapshot) -> Vec<String> {
    let overlays: Vec<&str> = snapshot.overlays.iter().map(String::as_str).collect();
    let mut out = vec![format!(
        "snapshot tick {}: overlays {{{}}}, interactive button {}",
        snapshot.tick,
        overlays.join(", "),
        snapshot.interactive_button
    )];
    out.extend(snapshot.log_tail.iter().map(|l| format!("log: {l}")));
    out
}

fn last_step(history: &[HistoryEntry]) -> usize {
    history.last().map_or(0, |e| e.step)
}

/// One crash issue per `Crashed` outcome, carrying the full action trace.
pub fn crash_check(
    task_id: &str,
    outcome: &Outcome,
    history: &[HistoryEntry],
    state: &AbstractState,
    objective: &Objective,
    snapshot: &Snapshot,
) -> Option<Finding> {
    if outcome.status != OutcomeStatus::Crashed {
        return None;
    }
    let last = history.last();
    let mut issue = Issue::new(
        IssueKind::Crash,
        task_id,
        last_step(history),
        outcome.log_line.clone(),
    );
    issue.action = last.map(|e| e.action.clone());
    issue.trace = history
        .iter()
        .map(|e| format!("{} @ {}", e.line(), e.state_key))
        .collect();
    let mut evidence = vec![format!("abstract state: {}", state.key)];
    evidence.extend(snapshot_lines(snapshot));
    let report = DiagnosisReport {
        task_description: objective.describe(),
        attempted_actions: attempted_summary(history),
        analysis: format!(
            "The game client terminated while executing {}.",
            last.map_or_else(|| "the first action".to_string(), |e| e.action.canonical())
        ),
        evidence,
    };
    Some(Finding::new(issue, report))
}

/// Turns a bug suspicion from reflection into an issue and its report.
/// Logic suspicions become logic anomalies; the rest are stuck issues.
pub fn make_stuck_diagnosis(
    task_id: &str,
    reflection: &ReflectionOutcome,
    state: &AbstractState,
    history: &[HistoryEntry],
    snapshot: &Snapshot,
    objective: &Objective,
) -> Option<Finding> {
    let ReflectionOutcome::BugSuspected { suspicion, analysis } = reflection else {
        return None;
    };
    let kind = match suspicion.bug_type {
        BugType::Logic => IssueKind::LogicAnomaly,
        BugType::Hang | BugType::Interaction => IssueKind::Stuck,
    };
    let mut issue = Issue::new(
        kind,
        task_id,
        last_step(history),
        format!("suspected {} bug: {}", suspicion.bug_type, suspicion.evidence[0]),
    );
    issue.severity = Severity::Medium;
    issue.bug_type = Some(suspicion.bug_type);
    issue.action = history.last().map(|e| e.action.clone());
    issue.trace = trace(history);
    let mut evidence: Vec<String> = suspicion.evidence.clone();
    evidence.push(format!("abstract state: {}", state.key));
    evidence.extend(snapshot_lines(snapshot));
    evidence.extend(trace(history).into_iter().map(|l| format!("history {l}")));
    let report = DiagnosisReport {
        task_description: objective.describe(),
        attempted_actions: attempted_summary(history),
        analysis: analysis.clone(),
        evidence,
    };
    Some(Finding::new(issue, report))
}

/// Running mean and variance of one action type's durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub samples: u64,
    pub mean_ms: f64,
    /// Sum of squared deviations (Welford).
    pub m2: f64,
}

impl DurationStats {
    pub fn add(&mut self, ms: f64) {
        self.samples += 1;
        let delta = ms - self.mean_ms;
        self.mean_ms += delta / self.samples as f64;
        self.m2 += delta * (ms - self.mean_ms);
    }

    /// Population standard deviation.
    pub fn stddev_ms(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            (self.m2 / self.samples as f64).max(0.0).sqrt()
        }
    }

    /// Durations at or above this are anomalous.
    pub fn threshold(&self, k: f64) -> f64 {
        (k * self.mean_ms).max(self.mean_ms + SIGMA_MARGIN * self.stddev_ms())
    }
}

/// Expected timings of a scenario family, learned on its first run only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingBaseline {
    pub schema: String,
    pub family: String,
    /// True until the first run of the family has finished.
    pub first_run: bool,
    pub actions: BTreeMap<Template, DurationStats>,
    /// Expected whole-task duration in milliseconds, by task id, taken from
    /// the first run that completed the task.
    pub tasks: BTreeMap<String, u64>,
}

impl TimingBaseline {
    pub fn new(family: impl Into<String>) -> Self {
        TimingBaseline {
            schema: BASELINE_SCHEMA.into(),
            family: family.into(),
            first_run: true,
            actions: BTreeMap::new(),
            tasks: BTreeMap::new(),
        }
    }

    /// Accumulates a sample; ignored once the first run has finished.
    pub fn observe(&mut self, template: Template, ms: u64) {
        if self.first_run {
            self.actions.entry(template).or_default().add(ms as f64);
        }
    }

    /// Ends a run. Action timings stop being learned after the first run;
    /// a task's expected duration comes from its first completed run.
    pub fn finish_run(&mut self, task_id: &str, elapsed_ms: u64, completed: bool) {
        if completed {
            self.tasks.entry(task_id.to_string()).or_insert(elapsed_ms);
        }
        self.first_run = false;
    }

    pub fn expected_task_ms(&self, task_id: &str) -> Option<u64> {
        self.tasks.get(task_id).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("baseline serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StorageError> {
        let b: TimingBaseline =
            serde_json::from_str(text).map_err(|e| StorageError::StorageCorrupt(e.to_string()))?;
        if b.schema != BASELINE_SCHEMA {
            return Err(StorageError::StorageCorrupt(format!("unsupported schema `{}`", b.schema)));
        }
        let bad = b.actions.values().any(|s| {
            !s.mean_ms.is_finite() || s.m2 < 0.0 || (!b.first_run && s.samples == 0)
        });
        if bad {
            return Err(StorageError::StorageCorrupt("invalid duration statistics".into()));
        }
        Ok(b)
    }

    pub fn persist(&self, path: &Path) -> Result<(), StorageError> {
        write_locked(path, &self.to_json())
    }

    /// A missing file yields a fresh first-run baseline.
    pub fn load(path: &Path, family: &str) -> Result<Self, StorageError> {
        match read_locked(path)? {
            None => Ok(TimingBaseline::new(family)),
            Some(text) => TimingBaseline::from_json(&text),
        }
    }
}

/// Flags one action whose duration reaches `max(k * mean, mean + 3 sd)` of
/// its type. Silent during the first run and for types never sampled then.
pub fn time_check(task_id: &str, entry: &HistoryEntry, baseline: &TimingBaseline, k: f64) -> Option<Issue> {
    if baseline.first_run {
        return None;
    }
    let stats = baseline.actions.get(&entry.action.template()).filter(|s| s.samples > 0)?;
    let threshold = stats.threshold(k);
    if (entry.duration_ms as f64) < threshold {
        return None;
    }
    let mut issue = Issue::new(
        IssueKind::TimeAnomaly,
        task_id,
        entry.step,
        format!(
            "{} took {} ms against a baseline mean of {:.0} ms (threshold {:.0} ms)",
            entry.action, entry.duration_ms, stats.mean_ms, threshold
        ),
    );
    issue.action = Some(entry.action.clone());
    issue.trace = vec![format!("{} @ {}", entry.line(), entry.state_key)];
    Some(issue)
}

/// Flags a task that has run `k` times its expected duration without any
/// progress since the expected duration elapsed.
pub fn task_time_check(
    task_id: &str,
    step: usize,
    elapsed_ms: u64,
    expected_ms: Option<u64>,
    k: f64,
    progress_in_overrun: bool,
) -> Option<Issue> {
    let expected = expected_ms.filter(|e| *e > 0)?;
    if progress_in_overrun || (elapsed_ms as f64) < k * expected as f64 {
        return None;
    }
    Some(Issue::new(
        IssueKind::TimeAnomaly,
        task_id,
        step,
        format!(
            "task still running after {elapsed_ms} ms, expected about {expected} ms, with no progress \
             since the expected duration"
        ),
    ))
}

/// Compares the game's quest bookkeeping with the specified requirements
/// and checks the player is inside the world.
pub fn logic_check(task_id: &str, history: &[HistoryEntry], world: &WorldState) -> Option<Finding> {
    let truth = world.ground_truth();
    let early = truth.iter().find(|t| t.completed && t.counter < t.required);
    let outside = world.location() == OUT_OF_WORLD;
    let (summary, analysis) = match (early, outside) {
        (Some(t), _) => (
            format!("step `{}` completed at {}/{}", t.id, t.counter, t.required),
            format!(
                "The game advanced past step `{}` although its counter was {} of the required {}.",
                t.id, t.counter, t.required
            ),
        ),
        (None, true) => (
            "player is outside the world geometry".to_string(),
            "The player's position lies outside every valid location, so a collision \
             surface is missing."
                .to_string(),
        ),
        (None, false) => return None,
    };
    let mut issue = Issue::new(IssueKind::LogicAnomaly, task_id, last_step(history), summary);
    issue.action = history.last().map(|e| e.action.clone());
    issue.trace = trace(history);
    let mut evidence: Vec<String> = truth
        .iter()
        .map(|t| {
            let state = if t.completed { "done" } else { "open" };
            format!("step {} {state} {}/{}", t.id, t.counter, t.required)
        })
        .collect();
    evidence.push(format!("player location: {}", world.location()));
    evidence.extend(snapshot_lines(&world.capture_snapshot()));
    let report = DiagnosisReport {
        task_description: Objective::resolve(world).describe(),
        attempted_actions: attempted_summary(history),
        analysis,
        evidence,
    };
    Some(Finding::new(issue, report))
}

/// Report for an issue raised without reflection, such as a timing anomaly.
pub fn basic_report(issue: &Issue, history: &[HistoryEntry], objective: &Objective) -> DiagnosisReport {
    let mut evidence = issue.trace.clone();
    if evidence.is_empty() {
        evidence = trace(history);
    }
    if evidence.is_empty() {
        evidence.push(issue.summary.clone());
    }
    DiagnosisReport {
        task_description: objective.describe(),
        attempted_actions: attempted_summary(history),
        analysis: issue.summary.clone(),
        evidence,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!("unknown report format `{s}`")),
        }
    }
}

pub fn render_markdown(f: &Finding) -> String {
    let i = &f.issue;
    let mut out = format!("# {} issue in task `{}`\n\n", i.kind.as_str(), i.task_id);
    let _ = writeln!(out, "- schema: {}", f.schema);
    let _ = writeln!(out, "- step: {}", i.step);
    let _ = writeln!(out, "- severity: {:?}", i.severity);
    if let Some(b) = i.bug_type {
        let _ = writeln!(out, "- suspected type: {b}");
    }
    if let Some(c) = i.confirmed {
        let _ = writeln!(out, "- confirmed: {c}{}", i.fault_id.as_ref().map_or(String::new(), |id| format!(" ({id})")));
    }
    let _ = writeln!(out, "- summary: {}\n", i.summary);
    let _ = writeln!(out, "## Task description\n\n{}\n", f.report.task_description);
    let _ = writeln!(out, "## Attempted actions\n\n{}\n", f.report.attempted_actions);
    let _ = writeln!(out, "## Analysis\n\n{}\n", f.report.analysis);
    out.push_str("## Evidence\n\n");
    for e in &f.report.evidence {
        let _ = writeln!(out, "- {e}");
    }
    if !i.trace.is_empty() {
        out.push_str("\n## Action trace\n\n");
        for t in &i.trace {
            let _ = writeln!(out, "- {t}");
        }
    }
    out
}

pub fn emit_report(f: &Finding, format: ReportFormat, sink: &mut dyn Write) -> Result<(), OracleError> {
    let text = match format {
        ReportFormat::Json => serde_json::to_string_pretty(f).expect("finding serializes"),
        ReportFormat::Markdown => render_markdown(f),
    };
    sink.write_all(text.as_bytes())
        .and_then(|_| sink.flush())
        .map_err(|e| OracleError::SinkUnwritable(e.to_string()))
}

pub fn parse_report(text: &str) -> Result<Finding, OracleError> {
    let f: Finding = serde_json::from_str(text).map_err(|e| OracleError::ReportInvalid(e.to_string()))?;
    if f.schema != REPORT_SCHEMA {
        return Err(OracleError::ReportInvalid(format!("unsupported schema `{}`", f.schema)));
    }
    Ok(f)
}
