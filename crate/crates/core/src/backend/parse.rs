use std::collections::BTreeSet;

use super::BackendError;
use crate::action::ConcreteAction;
use crate::agent::{BugType, ReflectionOutcome};

/// Extracts the first action in `text` and resolves it against `available`.
/// A `Use` without a pathway resolves to the first available pathway.
pub fn parse_action(text: &str, available: &BTreeSet<ConcreteAction>) -> Result<ConcreteAction, BackendError> {
    let action =
        ConcreteAction::extract(text).map_err(|e| BackendError::Unparseable(e.to_string()))?;
    if available.contains(&action) {
        return Ok(action);
    }
    if let ConcreteAction::Use { item, pathway: None } = &action {
        let found = available.iter().find(
            |a| matches!(a, ConcreteAction::Use { item: i, pathway: Some(_) } if i == item),
        );
        if let Some(a) = found {
            return Ok(a.clone());
        }
    }
    Err(BackendError::UnknownBinding(action.canonical()))
}

/// Every parseable action in `text`, one per line, in order, without repeats.
pub fn parse_action_list(text: &str) -> Vec<ConcreteAction> {
    let mut seen = BTreeSet::new();
    text.lines()
        .filter_map(|l| ConcreteAction::extract(l).ok())
        .filter(|a| seen.insert(a.clone()))
        .collect()
}

fn strip_tag<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    let t = line.trim();
    (t.len() >= tag.len() && t[..tag.len()].eq_ignore_ascii_case(tag)).then(|| t[tag.len()..].trim())
}

/// Parses a `PLAN:` or `BUG:` block. Text before the tag is treated as analysis.
pub fn parse_reflection(text: &str) -> Result<ReflectionOutcome, BackendError> {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .position(|l| strip_tag(l, "PLAN:").is_some() || strip_tag(l, "BUG:").is_some())
        .ok_or_else(|| BackendError::Unparseable("no PLAN: or BUG: block".into()))?;
    let mut analysis: Vec<String> =
        lines[..start].iter().map(|l| l.trim()).filter(|l| !l.is_empty()).map(String::from).collect();
    let body = &lines[start + 1..];
    for l in body {
        if let Some(a) = strip_tag(l, "analysis:") {
            analysis.push(a.to_string());
        }
    }
    let analysis = analysis.join(" ");

    if let Some(rest) = strip_tag(lines[start], "PLAN:") {
        let mut plan: Vec<ConcreteAction> = Vec::new();
        let first = std::iter::once(rest).filter(|r| !r.is_empty());
        for l in first.chain(body.iter().copied()) {
            if strip_tag(l, "analysis:").is_some() {
                continue;
            }
            if let Ok(a) = ConcreteAction::extract(l) {
                plan.push(a);
            }
        }
        return ReflectionOutcome::plan(plan, analysis)
            .ok_or_else(|| BackendError::Unparseable("PLAN: block has no actions".into()));
    }

    let rest = strip_tag(lines[start], "BUG:").expect("matched above");
    let word = rest.split(|c: char| !c.is_ascii_alphabetic()).find(|w| !w.is_empty()).unwrap_or("");
    let bug_type = BugType::parse(word)
        .ok_or_else(|| BackendError::Unparseable(format!("unknown bug type `{rest}`")))?;
    let evidence: Vec<String> = body
        .iter()
        .filter_map(|l| strip_tag(l, "evidence:").or_else(|| l.trim().strip_prefix("- ")))
        .map(|e| e.trim().to_string())
        .filter(|e| !e.is_empty())
        .collect();
    ReflectionOutcome::bug(bug_type, evidence, analysis)
        .ok_or_else(|| BackendError::Unparseable("BUG: block has no evidence".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> ConcreteAction {
        s.parse().unwrap()
    }

    fn available() -> BTreeSet<ConcreteAction> {
        [
            a("Talk(to=guard)"),
            a("Use(item=potion, pathway=screen-button)"),
            a("Use(item=potion, pathway=inventory-menu)"),
        ]
        .into()
    }

    #[test]
    fn plain_action_line() {
        assert_eq!(parse_action("Talk(to=guard)", &available()).unwrap(), a("Talk(to=guard)"));
    }

    #[test]
    fn action_inside_prose() {
        let text = "The potion should help.\nI will Use(Item=potion, Pathway=inventory-menu) now.";
        assert_eq!(
            parse_action(text, &available()).unwrap(),
            a("Use(item=potion, pathway=inventory-menu)")
        );
    }

    #[test]
    fn unknown_template_is_unparseable() {
        assert!(matches!(parse_action("Fly(to=moon)", &available()), Err(BackendError::Unparseable(_))));
    }

    #[test]
    fn absent_npc_is_unknown_binding() {
        assert_eq!(
            parse_action("Talk(to=ghost)", &available()),
            Err(BackendError::UnknownBinding("Talk(to=ghost)".into()))
        );
    }

    #[test]
    fn use_without_pathway_resolves() {
        assert_eq!(
            parse_action("Use(item=potion)", &available()).unwrap(),
            a("Use(item=potion, pathway=screen-button)")
        );
    }

    #[test]
    fn plan_block() {
        let r = parse_reflection("PLAN:\nMove(to=loc2)\nTalk(to=guard)").unwrap();
        assert_eq!(
            r,
            ReflectionOutcome::RevisedPlan {
                plan: vec![a("Move(to=loc2)"), a("Talk(to=guard)")],
                analysis: String::new()
            }
        );
    }

    #[test]
    fn bug_block() {
        let r = parse_reflection("BUG: logic\nevidence: step advanced at 5/6").unwrap();
        match r {
            ReflectionOutcome::BugSuspected { suspicion, analysis } => {
                assert_eq!(suspicion.bug_type, BugType::Logic);
                assert_eq!(suspicion.evidence, vec!["step advanced at 5/6".to_string()]);
                assert!(!analysis.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_text_is_unparseable() {
        assert!(matches!(parse_reflection(""), Err(BackendError::Unparseable(_))));
        assert!(parse_reflection("PLAN:\nnothing useful").is_err());
        assert!(parse_reflection("BUG: hang").is_err());
    }

    #[test]
    fn action_list_dedupes() {
        let got = parse_action_list("1. Talk(to=guard) | x\n2. Talk(to=guard)\nfoo\nExplore(north)");
        assert_eq!(got, vec![a("Talk(to=guard)"), a("Explore(north)")]);
    }
}
