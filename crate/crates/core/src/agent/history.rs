use serde::{Deserialize, Serialize};

use crate::action::ConcreteAction;
use crate::sim::OutcomeStatus;

/// Default number of trailing entries shown to a backend.
pub const DEFAULT_SUMMARY_CAP: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub state_key: String,
    pub action: ConcreteAction,
    pub outcome: OutcomeStatus,
    pub duration_ms: u64,
    pub log_line: String,
    /// Key-step completion rose or a new coverage node was reached.
    pub progress: bool,
}

impl HistoryEntry {
    /// An action that took effect without advancing the run reads as `ok`.
    pub fn line(&self) -> String {
        let status = match self.outcome {
            OutcomeStatus::Progress if !self.progress => "ok",
            s => status_name(s),
        };
        format!("#{} {} -> {}", self.step, self.action, status)
    }
}

pub fn status_name(s: OutcomeStatus) -> &'static str {
    match s {
        OutcomeStatus::Progress => "progress",
        OutcomeStatus::NoChange => "no-change",
        OutcomeStatus::Rejected => "rejected",
        OutcomeStatus::Crashed => "crashed",
        OutcomeStatus::Hung => "hung",
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    entries: Vec<HistoryEntry>,
}

impl History {
    pub fn new() -> Self {
        History::default()
    }

    /// Appends an entry, numbering it after the previous one.
    pub fn push(&mut self, mut entry: HistoryEntry) {
        entry.step = self.entries.len();
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }

    /// Length of the trailing run of entries without progress.
    pub fn trailing_no_progress(&self) -> usize {
        self.entries.iter().rev().take_while(|e| !e.progress).count()
    }

    /// Last `cap` entries as lines, plus outcome counts of the rest.
    pub fn summarize(&self, cap: usize) -> HistorySummary {
        let skip = self.entries.len().saturating_sub(cap);
        let mut omitted = OutcomeCounts::default();
        for e in &self.entries[..skip] {
            omitted.add(e.outcome);
        }
        HistorySummary {
            total: self.entries.len(),
            omitted,
            lines: self.entries[skip..].iter().map(HistoryEntry::line).collect(),
        }
    }
}

/// True iff the last `x` entries all lack progress. Histories shorter than
/// `x` are never considered stalled.
pub fn no_progress(entries: &[HistoryEntry], x: usize) -> bool {
    entries.len() >= x && entries[entries.len() - x..].iter().all(|e| !e.progress)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub progress: usize,
    pub no_change: usize,
    pub rejected: usize,
    pub crashed: usize,
    pub hung: usize,
}

impl OutcomeCounts {
    fn add(&mut self, s: OutcomeStatus) {
        match s {
            OutcomeStatus::Progress => self.progress += 1,
            OutcomeStatus::NoChange => self.no_change += 1,
            OutcomeStatus::Rejected => self.rejected += 1,
            OutcomeStatus::Crashed => self.crashed += 1,
            OutcomeStatus::Hung => self.hung += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.progress + self.no_change + self.rejected + self.crashed + self.hung
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistorySummary {
    pub total: usize,
    pub omitted: OutcomeCounts,
    pub lines: Vec<String>,
}

impl HistorySummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.omitted.total() > 0 {
            let o = &self.omitted;
            out.push_str(&format!(
                "({} earlier actions: {} progress, {} no-change, {} rejected, {} hung)\n",
                o.total(),
                o.progress,
                o.no_change,
                o.rejected,
                o.hung
            ));
        }
        if self.lines.is_empty() {
            out.push_str("(no actions yet)");
        } else {
            out.push_str(&self.lines.join("\n"));
        }
        out
    }
}

#[cfg(test)]
pub(crate) fn entry(progress: bool) -> HistoryEntry {
    HistoryEntry {
        step: 0,
        state_key: "k".into(),
        action: "Explore(north)".parse().unwrap(),
        outcome: if progress { OutcomeStatus::Progress } else { OutcomeStatus::NoChange },
        duration_ms: 1000,
        log_line: String::new(),
        progress,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(flags: &[bool]) -> History {
        let mut h = History::new();
        for f in flags {
            h.push(entry(*f));
        }
        h
    }

    #[test]
    fn twenty_stalled_steps_trigger() {
        let h = history(&[false; 20]);
        assert!(no_progress(h.entries(), 20));
    }

    #[test]
    fn progress_resets_the_window() {
        let mut flags = vec![false; 19];
        flags.push(true);
        assert!(!no_progress(history(&flags).entries(), 20));
    }

    #[test]
    fn short_history_is_not_stalled() {
        assert!(!no_progress(history(&[false; 5]).entries(), 20));
    }

    #[test]
    fn steps_are_contiguous() {
        let h = history(&[true, false, false]);
        let steps: Vec<_> = h.entries().iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![0, 1, 2]);
        assert_eq!(h.trailing_no_progress(), 2);
    }

    #[test]
    fn summary_caps_lines_and_counts_the_rest() {
        let h = history(&[true; 40]);
        let s = h.summarize(30);
        assert_eq!(s.lines.len(), 30);
        assert_eq!(s.omitted.progress, 10);
        assert!(s.render().starts_with("(10 earlier actions"));
    }
}
