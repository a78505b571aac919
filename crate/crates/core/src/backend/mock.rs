//! Deterministic backends: a greedy heuristic and a fingerprint-keyed script.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, Prompt, PromptKind};
use crate::action::ConcreteAction;

/// Picks the top-ranked action, switching to an untried one once the top
/// choice has failed twice in this state, or has been tried at all while no
/// rule backs it. Reflection follows a fixed table
/// of heuristics over the prompt's game information.
#[derive(Debug, Clone, Default)]
pub struct MockGreedy {
    calls: usize,
}

impl MockGreedy {
    pub fn new() -> Self {
        MockGreedy::default()
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

struct Ranked {
    action: String,
    ruled: bool,
    tried: u64,
    failed: u64,
}

fn bundle_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?m)^\d+\. (.+?) \| .*rules (.+?); tried (\d+); failed (\d+)").expect("valid regex")
    })
}

fn section_items(text: &str, label: &str) -> Vec<String> {
    let Some(line) = text.lines().find_map(|l| l.strip_prefix(label)) else {
        return Vec::new();
    };
    let inner = line.trim().trim_start_matches('{');
    let inner = inner.rsplit_once('}').map_or(inner, |(a, _)| a);
    inner
        .split("; ")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn field<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(label)).map(str::trim)
}

fn decide(prompt: &Prompt) -> Result<String, BackendError> {
    let ranked: Vec<Ranked> = bundle_regex()
        .captures_iter(&prompt.user)
        .map(|c| Ranked {
            action: c[1].to_string(),
            ruled: &c[2] != "none",
            tried: c[3].parse().unwrap_or(0),
            failed: c[4].parse().unwrap_or(0),
        })
        .collect();
    let first = ranked
        .first()
        .ok_or_else(|| BackendError::Unparseable("prompt carries no recommended actions".into()))?;
    let stale = !first.ruled && first.tried > 0;
    if first.failed < 2 && !stale {
        return Ok(first.action.clone());
    }
    let pick = ranked
        .iter()
        .find(|r| r.tried == 0)
        .or_else(|| ranked.iter().filter(|r| r.failed == 0).min_by_key(|r| r.tried))
        .unwrap_or(first);
    Ok(pick.action.clone())
}

fn reflect(prompt: &Prompt) -> String {
    let text = &prompt.user;
    let history = section_items(text, "Action History: ");
    let hung: Vec<&String> = history.iter().filter(|h| h.ends_with("-> hung")).collect();
    if !hung.is_empty() {
        let mut out = String::from("BUG: hang\n");
        for h in hung.iter().take(3) {
            out.push_str(&format!("evidence: {h}\n"));
        }
        if let Some(o) = field(text, "UI Overlays: ").filter(|o| o.contains("unresponsive")) {
            out.push_str(&format!("evidence: UI overlays {o}\n"));
        }
        out.push_str("analysis: The same interaction stopped responding and the game did not recover.");
        return out;
    }

    static DONE: OnceLock<Regex> = OnceLock::new();
    let done = DONE.get_or_init(|| Regex::new(r"([\w.-]+) done (\d+)/(\d+)").expect("valid regex"));
    if let Some(line) = field(text, "Step Status: ") {
        for c in done.captures_iter(line) {
            let (n, req): (u64, u64) = (c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0));
            if n < req {
                return format!(
                    "BUG: logic\nevidence: step {} marked done at {n}/{req}\nanalysis: The quest \
                     advanced before its counter reached the requirement.",
                    &c[1]
                );
            }
        }
    }

    let previous: usize = field(text, "Previous Reflections: ").and_then(|v| v.parse().ok()).unwrap_or(0);
    if previous >= 1 {
        let mut out = format!("BUG: interaction\nevidence: no progress after {previous} earlier reflection(s)\n");
        for h in history.iter().rev().take(2) {
            out.push_str(&format!("evidence: {h}\n"));
        }
        out.push_str("analysis: Revised plans did not move the quest forward.");
        return out;
    }

    if let Some((npc, loc)) = field(text, "Target: ").and_then(|t| t.split_once(" at ")) {
        let talk = format!("Talk(to={npc}) -> ");
        let failed = history
            .iter()
            .any(|h| h.contains(&talk) && (h.ends_with("no-change") || h.ends_with("rejected")));
        if failed {
            return format!(
                "PLAN:\nMove(to={loc})\nTalk(to={npc})\nanalysis: Interaction with {npc} failed; \
                 navigate to its location first, then interact."
            );
        }
    }

    let untried = section_items(text, "Untried Actions: ");
    if untried.is_empty() {
        return "BUG: interaction\nevidence: every available action has already been tried\n\
                analysis: No untried action remains in this state."
            .into();
    }
    let mut out = String::from("PLAN:\n");
    for a in untried.iter().take(3) {
        out.push_str(a);
        out.push('\n');
    }
    out.push_str("analysis: Try actions not attempted in this state yet.");
    out
}

fn rerank(prompt: &Prompt) -> String {
    prompt
        .user
        .lines()
        .filter_map(|l| l.split_once(". ").map(|(_, rest)| rest))
        .filter_map(|rest| rest.split(" | ").next())
        .filter(|a| a.parse::<ConcreteAction>().is_ok())
        .collect::<Vec<_>>()
        .join("\n")
}

impl Backend for MockGreedy {
    fn name(&self) -> &str {
        "mock-greedy"
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        self.calls += 1;
        match prompt.kind {
            PromptKind::Decision => decide(prompt),
            PromptKind::Reflection => Ok(reflect(prompt)),
            PromptKind::Rerank => Ok(rerank(prompt)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub fingerprint: String,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))
    }
}

/// Replays registered replies keyed by prompt fingerprint.
pub struct MockScripted {
    table: BTreeMap<String, String>,
    fallback: Option<Box<dyn Backend>>,
    calls: usize,
}

impl MockScripted {
    pub fn new(script: Script) -> Self {
        let table = script.entries.into_iter().map(|e| (e.fingerprint, e.reply)).collect();
        MockScripted { table, fallback: None, calls: 0 }
    }

    pub fn with_fallback(mut self, fallback: Box<dyn Backend>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn register(&mut self, prompt: &Prompt, reply: impl Into<String>) {
        self.table.insert(prompt.fingerprint(), reply.into());
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Backend for MockScripted {
    fn name(&self) -> &str {
        "mock-scripted"
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        self.calls += 1;
        let fp = prompt.fingerprint();
        if let Some(reply) = self.table.get(&fp) {
            return Ok(reply.clone());
        }
        match &mut self.fallback {
            Some(b) => b.complete(prompt),
            None => Err(BackendError::NoScript(fp)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decision(lines: &[&str]) -> Prompt {
        let mut user = String::from("[Recommended Actions]\n");
        for (i, l) in lines.iter().enumerate() {
            user.push_str(&format!("{}. {l}\n", i + 1));
        }
        Prompt { kind: PromptKind::Decision, system: String::new(), user }
    }

    #[test]
    fn greedy_takes_rank_one() {
        let p = decision(&[
            "Talk(to=a) | score 2.00; rules r; tried 0; failed 0",
            "Talk(to=b) | score 1.00; rules r; tried 0; failed 0",
        ]);
        assert_eq!(MockGreedy::new().complete(&p).unwrap(), "Talk(to=a)");
    }

    #[test]
    fn greedy_switches_after_two_failures() {
        let p = decision(&[
            "Talk(to=a) | score 2.00; rules r; tried 2; failed 2",
            "Talk(to=b) | score 1.00; rules r; tried 1; failed 0",
            "Talk(to=c) | score 0.00; rules none; tried 0; failed 0",
        ]);
        assert_eq!(MockGreedy::new().complete(&p).unwrap(), "Talk(to=c)");
    }

    #[test]
    fn greedy_leaves_a_tried_unranked_top_choice() {
        let p = decision(&[
            "Move(to=gate) | score 0.00; rules none; tried 3; failed 0",
            "Talk(to=elder) | score 0.00; rules none; tried 0; failed 0",
        ]);
        assert_eq!(MockGreedy::new().complete(&p).unwrap(), "Talk(to=elder)");
        let ruled = decision(&[
            "Move(to=gate) | score 2.00; rules head-to-objective; tried 3; failed 0",
            "Talk(to=elder) | score 0.00; rules none; tried 0; failed 0",
        ]);
        assert_eq!(MockGreedy::new().complete(&ruled).unwrap(), "Move(to=gate)");
    }

    #[test]
    fn greedy_reflection_prefers_hang_evidence() {
        let user = "Action History: {#0 Move(to=x) -> progress; #1 Use(item=orb, pathway=screen-button) -> hung}\n\
                    Previous Reflections: 0\n";
        let p = Prompt { kind: PromptKind::Reflection, system: String::new(), user: user.into() };
        let reply = MockGreedy::new().complete(&p).unwrap();
        assert!(reply.starts_with("BUG: hang"));
        assert!(reply.contains("#1 Use(item=orb, pathway=screen-button) -> hung"));
    }

    #[test]
    fn greedy_reflection_plans_npc_approach_after_failed_talks() {
        let user = "Action History: {#0 Talk(to=guard) -> no-change}\nTarget: guard at hall\n\
                    Previous Reflections: 0\nUntried Actions: {Explore(direction=north)}\n";
        let p = Prompt { kind: PromptKind::Reflection, system: String::new(), user: user.into() };
        let reply = MockGreedy::new().complete(&p).unwrap();
        assert!(reply.starts_with("PLAN:\nMove(to=hall)\nTalk(to=guard)"), "{reply}");
    }

    #[test]
    fn scripted_lookup_and_miss() {
        let p = decision(&["Talk(to=a) | tried 0; failed 0"]);
        let mut m = MockScripted::new(Script::default());
        assert!(matches!(m.complete(&p), Err(BackendError::NoScript(_))));
        m.register(&p, "Talk(to=a)");
        assert_eq!(m.complete(&p).unwrap(), "Talk(to=a)");
    }
}
