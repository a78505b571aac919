//! Persistent state-action transition memory shared across runs of a family.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::ConcreteAction;
use crate::sim::OutcomeStatus;

pub const COVERAGE_SCHEMA: &str = "coverage-v1";

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("stored file is corrupt: {0}")]
    StorageCorrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl StorageError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StorageError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeTag {
    Success,
    NoProgress,
    Error,
    BugEncountered,
}

impl From<OutcomeStatus> for OutcomeTag {
    fn from(s: OutcomeStatus) -> Self {
        match s {
            OutcomeStatus::Progress => OutcomeTag::Success,
            // A frozen pathway leaves the game running but goes nowhere.
            OutcomeStatus::NoChange | OutcomeStatus::Hung => OutcomeTag::NoProgress,
            OutcomeStatus::Rejected => OutcomeTag::Error,
            OutcomeStatus::Crashed => OutcomeTag::BugEncountered,
        }
    }
}

/// Attempt tallies of one state-action pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairStats {
    pub attempts: u64,
    pub success: u64,
    pub no_progress: u64,
    pub error: u64,
    pub bug: u64,
}

impl PairStats {
    /// Attempts that did not move the game forward. Crashes are not
    /// counted, so a crashing action stays reproducible.
    pub fn failed(&self) -> u64 {
        self.no_progress + self.error
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct EdgeRecord {
    state: String,
    action: String,
    tag: OutcomeTag,
    attempts: u64,
}

#[derive(Serialize)]
struct Body<'a> {
    schema: &'a str,
    family: &'a str,
    nodes: &'a BTreeMap<String, u64>,
    edges: &'a [EdgeRecord],
}

#[derive(Deserialize)]
struct StoredFile {
    schema: String,
    family: String,
    checksum: String,
    nodes: BTreeMap<String, u64>,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize)]
struct StoredFileOut<'a> {
    schema: &'a str,
    family: &'a str,
    checksum: String,
    nodes: &'a BTreeMap<String, u64>,
    edges: &'a [EdgeRecord],
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoverageMap {
    pub family: String,
    nodes: BTreeMap<String, u64>,
    edges: BTreeMap<(String, String, OutcomeTag), u64>,
}

impl CoverageMap {
    pub fn new(family: impl Into<String>) -> Self {
        CoverageMap { family: family.into(), ..Default::default() }
    }

    /// Counts a visit; true when the state was never seen before.
    pub fn visit(&mut self, state: &str) -> bool {
        let n = self.nodes.entry(state.to_string()).or_insert(0);
        *n += 1;
        *n == 1
    }

    pub fn record(&mut self, state: &str, action: &ConcreteAction, tag: OutcomeTag) {
        self.nodes.entry(state.to_string()).or_insert(1);
        *self.edges.entry((state.to_string(), action.canonical(), tag)).or_insert(0) += 1;
    }

    pub fn contains(&self, state: &str) -> bool {
        self.nodes.contains_key(state)
    }

    pub fn visits(&self, state: &str) -> u64 {
        self.nodes.get(state).copied().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, u64)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, OutcomeTag, u64)> {
        self.edges.iter().map(|((s, a, t), n)| (s.as_str(), a.as_str(), *t, *n))
    }

    pub fn stats(&self, state: &str, action: &ConcreteAction) -> PairStats {
        let action = action.canonical();
        let mut out = PairStats::default();
        for tag in [OutcomeTag::Success, OutcomeTag::NoProgress, OutcomeTag::Error, OutcomeTag::BugEncountered] {
            let n = self
                .edges
                .get(&(state.to_string(), action.clone(), tag))
                .copied()
                .unwrap_or(0);
            out.attempts += n;
            match tag {
                OutcomeTag::Success => out.success = n,
                OutcomeTag::NoProgress => out.no_progress = n,
                OutcomeTag::Error => out.error = n,
                OutcomeTag::BugEncountered => out.bug = n,
            }
        }
        out
    }

    /// `weight` times the no-progress and error attempts of the pair.
    pub fn deprioritization_penalty(&self, state: &str, action: &ConcreteAction, weight: f64) -> f64 {
        weight * self.stats(state, action).failed() as f64
    }

    /// True when `other`'s counts are all at most this map's counts.
    pub fn dominates(&self, other: &CoverageMap) -> bool {
        other.nodes.iter().all(|(k, v)| self.nodes.get(k).is_some_and(|n| n >= v))
            && other.edges.iter().all(|(k, v)| self.edges.get(k).is_some_and(|n| n >= v))
    }

    fn records(&self) -> Vec<EdgeRecord> {
        self.edges
            .iter()
            .map(|((state, action, tag), n)| EdgeRecord {
                state: state.clone(),
                action: action.clone(),
                tag: *tag,
                attempts: *n,
            })
            .collect()
    }

    fn checksum(family: &str, nodes: &BTreeMap<String, u64>, edges: &[EdgeRecord]) -> String {
        let body = Body { schema: COVERAGE_SCHEMA, family, nodes, edges };
        let bytes = serde_json::to_vec(&body).expect("coverage serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn to_json(&self) -> String {
        let edges = self.records();
        let out = StoredFileOut {
            schema: COVERAGE_SCHEMA,
            family: &self.family,
            checksum: Self::checksum(&self.family, &self.nodes, &edges),
            nodes: &self.nodes,
            edges: &edges,
        };
        serde_json::to_string_pretty(&out).expect("coverage serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, StorageError> {
        let f: StoredFile =
            serde_json::from_str(text).map_err(|e| StorageError::StorageCorrupt(e.to_string()))?;
        if f.schema != COVERAGE_SCHEMA {
            return Err(StorageError::StorageCorrupt(format!("unsupported schema `{}`", f.schema)));
        }
        if Self::checksum(&f.family, &f.nodes, &f.edges) != f.checksum {
            return Err(StorageError::StorageCorrupt("checksum mismatch".into()));
        }
        let mut map = CoverageMap::new(f.family);
        map.nodes = f.nodes;
        for e in f.edges {
            if e.attempts == 0 || !map.nodes.contains_key(&e.state) {
                return Err(StorageError::StorageCorrupt(format!("bad edge from `{}`", e.state)));
            }
            map.edges.insert((e.state, e.action, e.tag), e.attempts);
        }
        if map.nodes.values().any(|n| *n == 0) {
            return Err(StorageError::StorageCorrupt("zero visit count".into()));
        }
        Ok(map)
    }

    /// Writes the map under an exclusive lock on a sidecar `.lock` file.
    pub fn persist(&self, path: &Path) -> Result<(), StorageError> {
        write_locked(path, &self.to_json())
    }

    /// Loads a persisted map; a missing file yields an empty map for `family`.
    pub fn load(path: &Path, family: &str) -> Result<Self, StorageError> {
        match read_locked(path)? {
            None => Ok(CoverageMap::new(family)),
            Some(text) => CoverageMap::from_json(&text),
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".lock");
    path.with_file_name(name)
}

fn open_lock(path: &Path) -> Result<File, StorageError> {
    let lp = lock_path(path);
    if let Some(dir) = lp.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| StorageError::io(dir, e))?;
    }
    OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&lp)
        .map_err(|e| StorageError::io(&lp, e))
}

/// Atomically replaces `path` with `contents` while holding the exclusive lock.
pub(crate) fn write_locked(path: &Path, contents: &str) -> Result<(), StorageError> {
    let lock = open_lock(path)?;
    lock.lock().map_err(|e| StorageError::io(path, e))?;
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    let _ = lock.unlock();
    result.map_err(|e| StorageError::io(path, e))
}

/// Reads `path` under a shared lock; `None` when it does not exist.
pub(crate) fn read_locked(path: &Path) -> Result<Option<String>, StorageError> {
    if !path.exists() {
        return Ok(None);
    }
    let lock = open_lock(path)?;
    lock.lock_shared().map_err(|e| StorageError::io(path, e))?;
    let text = fs::read_to_string(path);
    let _ = lock.unlock();
    text.map(Some).map_err(|e| StorageError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> ConcreteAction {
        s.parse().unwrap()
    }

    #[test]
    fn first_visit_is_new() {
        let mut c = CoverageMap::new("fam");
        assert!(c.visit("k"));
        assert!(!c.visit("k"));
        assert_eq!(c.visits("k"), 2);
    }

    #[test]
    fn penalty_counts_only_failures() {
        let mut c = CoverageMap::new("fam");
        let talk = a("Talk(to=guard)");
        assert_eq!(c.deprioritization_penalty("k", &talk, 0.5), 0.0);
        for _ in 0..4 {
            c.record("k", &talk, OutcomeTag::NoProgress);
        }
        assert_eq!(c.deprioritization_penalty("k", &talk, 0.5), 2.0);
        let mv = a("Move(to=yard)");
        c.record("k", &mv, OutcomeTag::Success);
        c.record("k", &mv, OutcomeTag::BugEncountered);
        assert_eq!(c.deprioritization_penalty("k", &mv, 0.5), 0.0);
        assert_eq!(c.stats("k", &mv).failed(), 0);
        assert_eq!(c.stats("k", &mv).bug, 1);
    }

    #[test]
    fn crashed_outcome_tags_bug() {
        assert_eq!(OutcomeTag::from(OutcomeStatus::Crashed), OutcomeTag::BugEncountered);
        assert_eq!(OutcomeTag::from(OutcomeStatus::Rejected), OutcomeTag::Error);
        assert_eq!(OutcomeTag::from(OutcomeStatus::Hung), OutcomeTag::NoProgress);
    }

    #[test]
    fn persist_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.json");
        assert_eq!(CoverageMap::load(&path, "fam").unwrap(), CoverageMap::new("fam"));
        let mut c = CoverageMap::new("fam");
        c.visit("a=1");
        c.record("a=1", &a("Explore(north)"), OutcomeTag::NoProgress);
        c.persist(&path).unwrap();
        let first = fs::read(&path).unwrap();
        let back = CoverageMap::load(&path, "fam").unwrap();
        assert_eq!(back, c);
        back.persist(&path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn tampering_is_detected() {
        let mut c = CoverageMap::new("fam");
        c.visit("a=1");
        let text = c.to_json().replace("\"a=1\": 1", "\"a=1\": 7");
        assert!(matches!(CoverageMap::from_json(&text), Err(StorageError::StorageCorrupt(_))));
    }
}
