//! Feasibility filtering and rule-driven action recommendation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionParseError, ActionPattern, ConcreteAction};
use crate::agent::{CoverageMap, Objective};
use crate::backend::{self, Backend};
use crate::perception::{AbstractState, FeatureValue, GameMetadata};

pub const RULES_SCHEMA: &str = "rules-v1";
pub const DEFAULT_BUNDLE_SIZE: usize = 5;
pub const DEFAULT_PENALTY_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionSpaceError {
    #[error("rule `{rule}`: {reason}")]
    RulesInvalid { rule: String, reason: String },
    #[error("unknown action form: {0}")]
    UnknownTemplate(#[from] ActionParseError),
    #[error("no feasible action in the current state")]
    EmptyFeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    Eq,
    Ne,
    Contains,
    Absent,
}

/// A predicate over one abstract feature. `value` may be a `$objective.*`
/// reference; an unresolved reference makes the condition false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

impl Condition {
    pub fn holds(&self, state: &AbstractState, objective: &Objective) -> bool {
        let value = match &self.value {
            Some(v) => match v.strip_prefix('$') {
                Some(r) => match objective.lookup(r) {
                    Some(x) => Some(x),
                    None => return false,
                },
                None => Some(v.clone()),
            },
            None => None,
        };
        let feature = state.feature(&self.feature);
        let eq = |f: Option<&FeatureValue>, v: &str| matches!(f, Some(FeatureValue::Symbol(s)) if s == v);
        let has = |f: Option<&FeatureValue>, v: &str| match f {
            Some(FeatureValue::Set(s)) => s.contains(v),
            Some(FeatureValue::Symbol(s)) => s == v,
            None => false,
        };
        match (self.op, value.as_deref()) {
            (Op::Eq, Some(v)) => eq(feature, v),
            (Op::Ne, Some(v)) => !eq(feature, v),
            (Op::Contains, Some(v)) => has(feature, v),
            (Op::Absent, Some(v)) => !has(feature, v),
            (Op::Absent, None) => match feature {
                None => true,
                Some(FeatureValue::Set(s)) => s.is_empty(),
                Some(FeatureValue::Symbol(_)) => false,
            },
            (_, None) => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityRule {
    pub id: String,
    pub action: ActionPattern,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    pub verdict: Verdict,
    #[serde(default)]
    pub priority: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSource {
    Expert,
    DocExtracted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRule {
    pub id: String,
    #[serde(default)]
    pub conditions: Vec<Condition>,
    /// Objective kinds the rule applies to; empty means any.
    #[serde(default)]
    pub objective_kinds: Vec<String>,
    pub recommends: Vec<ActionPattern>,
    pub weight: f64,
    pub source: RuleSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub schema: String,
    #[serde(default)]
    pub feasibility: Vec<FeasibilityRule>,
    #[serde(default)]
    pub relevance: Vec<RelevanceRule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet { schema: RULES_SCHEMA.into(), feasibility: vec![], relevance: vec![] }
    }
}

fn pattern_matches(p: &ActionPattern, a: &ConcreteAction, objective: &Objective) -> bool {
    p.matches(a, |r| objective.lookup(r))
}

/// Outcome of evaluating the feasibility rules for one action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityDecision {
    pub allowed: bool,
    /// Highest-priority matching rule (deny first on ties), if any matched.
    pub rule: Option<String>,
}

impl RuleSet {
    pub fn from_json(text: &str, meta: &GameMetadata) -> Result<Self, ActionSpaceError> {
        let rules: RuleSet = serde_json::from_str(text).map_err(|e| {
            ActionSpaceError::RulesInvalid { rule: "<document>".into(), reason: e.to_string() }
        })?;
        rules.validate(meta)?;
        Ok(rules)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }

    pub fn validate(&self, meta: &GameMetadata) -> Result<(), ActionSpaceError> {
        let bad = |rule: &str, reason: String| {
            Err(ActionSpaceError::RulesInvalid { rule: rule.into(), reason })
        };
        if self.schema != RULES_SCHEMA {
            return bad("<document>", format!("unsupported schema `{}`", self.schema));
        }
        let mut ids = BTreeSet::new();
        let conds = self
            .feasibility
            .iter()
            .map(|r| (&r.id, &r.conditions))
            .chain(self.relevance.iter().map(|r| (&r.id, &r.conditions)));
        for (id, conditions) in conds {
            if !ids.insert(id.as_str()) {
                return bad(id, "duplicate rule id".into());
            }
            for c in conditions {
                match meta.unit(&c.feature) {
                    None => return bad(id, format!("condition on unknown feature `{}`", c.feature)),
                    Some(u) if !u.kept() => {
                        return bad(id, format!("condition on dropped feature `{}`", c.feature))
                    }
                    Some(_) => {}
                }
                if c.value.is_none() && c.op != Op::Absent {
                    return bad(id, format!("`{:?}` condition needs a value", c.op));
                }
            }
        }
        for r in &self.relevance {
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return bad(&r.id, "weight must be positive".into());
            }
            if r.recommends.is_empty() {
                return bad(&r.id, "recommends nothing".into());
            }
        }
        Ok(())
    }

    pub fn feasibility(
        &self,
        action: &ConcreteAction,
        state: &AbstractState,
        objective: &Objective,
    ) -> FeasibilityDecision {
        let template = action.template();
        let mut has_allow_rule = false;
        let mut denied = false;
        let mut allowed = false;
        let mut deciding: Option<&FeasibilityRule> = None;
        for r in self.feasibility.iter().filter(|r| r.action.template == template) {
            if r.verdict == Verdict::Allow {
                has_allow_rule = true;
            }
            let hit = pattern_matches(&r.action, action, objective)
                && r.conditions.iter().all(|c| c.holds(state, objective));
            if !hit {
                continue;
            }
            match r.verdict {
                Verdict::Deny => denied = true,
                Verdict::Allow => allowed = true,
            }
            let better = match deciding {
                None => true,
                Some(d) => {
                    r.priority > d.priority
                        || (r.priority == d.priority
                            && r.verdict == Verdict::Deny
                            && d.verdict == Verdict::Allow)
                }
            };
            if better {
                deciding = Some(r);
            }
        }
        FeasibilityDecision {
            allowed: !denied && (!has_allow_rule || allowed),
            rule: deciding.map(|r| r.id.clone()),
        }
    }

    /// Ids and weights of the relevance rules that recommend `action`.
    pub fn relevance(
        &self,
        action: &ConcreteAction,
        state: &AbstractState,
        objective: &Objective,
    ) -> Vec<(&str, f64)> {
        self.relevance
            .iter()
            .filter(|r| r.objective_kinds.is_empty() || r.objective_kinds.contains(&objective.kind))
            .filter(|r| r.conditions.iter().all(|c| c.holds(state, objective)))
            .filter(|r| r.recommends.iter().any(|p| pattern_matches(p, action, objective)))
            .map(|r| (r.id.as_str(), r.weight))
            .collect()
    }
}

/// Available actions as template instances, in canonical order.
pub fn instantiate_templates<'a>(
    available: impl IntoIterator<Item = &'a ConcreteAction>,
) -> Vec<ConcreteAction> {
    let set: BTreeSet<ConcreteAction> = available.into_iter().cloned().collect();
    set.into_iter().collect()
}

/// Parses textual action forms, rejecting anything outside the template set.
pub fn instantiate_text<S: AsRef<str>>(forms: &[S]) -> Result<Vec<ConcreteAction>, ActionSpaceError> {
    let mut set = BTreeSet::new();
    for f in forms {
        set.insert(f.as_ref().parse::<ConcreteAction>()?);
    }
    Ok(set.into_iter().collect())
}

pub fn filter_feasible(
    candidates: &[ConcreteAction],
    state: &AbstractState,
    objective: &Objective,
    rules: &RuleSet,
) -> Vec<ConcreteAction> {
    candidates
        .iter()
        .filter(|a| rules.feasibility(a, state, objective).allowed)
        .cloned()
        .collect()
}

/// True iff `action` is currently available and allowed by the rules.
/// Recommendation is advisory, so bundle membership is not required.
pub fn validate(
    action: &ConcreteAction,
    available: &BTreeSet<ConcreteAction>,
    state: &AbstractState,
    objective: &Objective,
    rules: &RuleSet,
) -> bool {
    available.contains(action) && rules.feasibility(action, state, objective).allowed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendParams {
    pub bundle_size: usize,
    pub penalty_weight: f64,
}

impl Default for RecommendParams {
    fn default() -> Self {
        RecommendParams { bundle_size: DEFAULT_BUNDLE_SIZE, penalty_weight: DEFAULT_PENALTY_WEIGHT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleEntry {
    pub action: ConcreteAction,
    pub score: f64,
    pub rules: Vec<String>,
    pub penalty: f64,
    /// Prior attempts of this action in this state, from coverage memory.
    pub tried: u64,
    /// Of those, attempts that did not move the game forward.
    pub failed: u64,
}

impl BundleEntry {
    pub fn rationale(&self) -> String {
        let rules = if self.rules.is_empty() { "none".to_string() } else { self.rules.join(",") };
        format!("score {:.2}; rules {rules}; tried {}; failed {}", self.score, self.tried, self.failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationBundle {
    pub entries: Vec<BundleEntry>,
    /// Set when a backend reordered the rule ranking.
    pub backend_note: Option<String>,
}

impl RecommendationBundle {
    pub fn actions(&self) -> impl Iterator<Item = &ConcreteAction> {
        self.entries.iter().map(|e| &e.action)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Scores every feasible action, keeps the best `bundle_size`.
///
/// Score is the summed weight of matching relevance rules minus the coverage
/// penalty; ties fall back to canonical action order. A backend, if given,
/// may reorder the top `2 * bundle_size` candidates and nothing beyond them.
pub fn recommend(
    state: &AbstractState,
    objective: &Objective,
    feasible: &[ConcreteAction],
    coverage: &CoverageMap,
    rules: &RuleSet,
    params: &RecommendParams,
    backend: Option<&mut dyn Backend>,
) -> Result<RecommendationBundle, ActionSpaceError> {
    if feasible.is_empty() {
        return Err(ActionSpaceError::EmptyFeasible);
    }
    let unique: BTreeSet<&ConcreteAction> = feasible.iter().collect();
    let mut scored: Vec<BundleEntry> = unique
        .into_iter()
        .map(|a| {
            let hits = rules.relevance(a, state, objective);
            let stats = coverage.stats(&state.key, a);
            let penalty = coverage.deprioritization_penalty(&state.key, a, params.penalty_weight);
            BundleEntry {
                action: a.clone(),
                score: hits.iter().map(|(_, w)| w).sum::<f64>() - penalty,
                rules: hits.iter().map(|(id, _)| id.to_string()).collect(),
                penalty,
                tried: stats.attempts,
                failed: stats.failed(),
            }
        })
        .collect();
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.action.cmp(&b.action)));

    let mut note = None;
    if let Some(backend) = backend {
        let pool = scored.len().min(2 * params.bundle_size);
        let prompt = backend::prompt::build_rerank_prompt(state, objective, &scored[..pool]);
        if let Ok(reply) = backend.complete(&prompt) {
            let order = backend::parse::parse_action_list(&reply);
            let mut head: Vec<BundleEntry> = Vec::new();
            let mut rest: Vec<BundleEntry> = scored[..pool].to_vec();
            for a in order {
                if let Some(i) = rest.iter().position(|e| e.action == a) {
                    head.push(rest.remove(i));
                }
            }
            if !head.is_empty() {
                note = Some(format!("{} reordered {} of {pool} candidates", backend.name(), head.len()));
                head.extend(rest);
                head.extend(scored.drain(pool..));
                scored = head;
            }
        }
    }
    scored.truncate(params.bundle_size);
    Ok(RecommendationBundle { entries: scored, backend_note: note })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn cond(feature: &str, op: Op, value: &str) -> Condition {
        Condition { feature: feature.into(), op, value: Some(value.into()) }
    }

    /// Three rules: no attacking mid-dialogue, no healing at full health,
    /// and a pull towards the objective NPC.
    pub fn three_rules() -> RuleSet {
        RuleSet {
            schema: RULES_SCHEMA.into(),
            feasibility: vec![
                FeasibilityRule {
                    id: "no-attack-in-dialogue".into(),
                    action: "Attack".parse().unwrap(),
                    conditions: vec![cond("status", Op::Contains, "in-dialogue")],
                    verdict: Verdict::Deny,
                    priority: 10,
                },
                FeasibilityRule {
                    id: "no-heal-at-full".into(),
                    action: "Use(item=healing-potion)".parse().unwrap(),
                    conditions: vec![cond("hp", Op::Eq, "High")],
                    verdict: Verdict::Deny,
                    priority: 5,
                },
            ],
            relevance: vec![RelevanceRule {
                id: "approach-objective-npc".into(),
                conditions: vec![],
                objective_kinds: vec![],
                recommends: vec![
                    "Talk(to=$objective.npc)".parse().unwrap(),
                    "Move(to=$objective.next_hop)".parse().unwrap(),
                ],
                weight: 2.0,
                source: RuleSource::Expert,
            }],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::perception::fixtures::basic;
    use crate::sim::fixtures::minimal_talk;
    use crate::sim::{ItemEffect, ItemSpec, WorldState, IN_INVENTORY};
    use crate::action::Pathway;

    fn a(s: &str) -> ConcreteAction {
        s.parse().unwrap()
    }

    fn world() -> WorldState {
        let mut s = minimal_talk();
        s.items.push(ItemSpec {
            id: "healing-potion".into(),
            location: IN_INVENTORY.into(),
            usable_via: [Pathway::InventoryMenu].into(),
            effect: Some(ItemEffect::Heal(0.5)),
            consumable: true,
            appears_at: None,
        });
        WorldState::new(s).unwrap()
    }

    fn observe(w: &WorldState) -> (AbstractState, Objective, BTreeSet<ConcreteAction>) {
        let state = basic().abstract_state(&w.read_state().unwrap()).unwrap();
        (state, Objective::resolve(w), w.enumerate_actions().unwrap())
    }

    #[test]
    fn rules_validate_against_metadata() {
        let rules = three_rules();
        rules.validate(&basic()).unwrap();
        assert_eq!(RuleSet::from_json(&rules.to_json(), &basic()).unwrap(), rules);
        let mut broken = rules.clone();
        broken.feasibility[1].conditions[0].feature = "mood".into();
        let err = broken.validate(&basic()).unwrap_err();
        assert!(matches!(err, ActionSpaceError::RulesInvalid { ref rule, .. } if rule == "no-heal-at-full"));
        broken.feasibility[1].conditions[0].feature = "tick".into();
        let err = broken.validate(&basic()).unwrap_err();
        assert!(err.to_string().contains("dropped feature `tick`"));
    }

    #[test]
    fn no_rules_means_everything_is_feasible() {
        let w = world();
        let (s, o, avail) = observe(&w);
        let cands = instantiate_templates(&avail);
        assert_eq!(filter_feasible(&cands, &s, &o, &RuleSet::default()), cands);
    }

    #[test]
    fn attack_denied_during_dialogue() {
        // Two talk steps so the first Talk leaves the dialogue open.
        let mut w2 = WorldState::new({
            let mut s = minimal_talk();
            s.quest.steps.push(crate::sim::StepSpec {
                id: "s1".into(),
                description: String::new(),
                predicate: crate::sim::Predicate::Talk { npc: "guard".into() },
                key_state: true,
            });
            s
        })
        .unwrap();
        w2.execute(&a("Talk(to=guard)"));
        let (s, o, avail) = observe(&w2);
        let feas = filter_feasible(&instantiate_templates(&avail), &s, &o, &three_rules());
        assert!(avail.contains(&a("Attack(target=guard)")));
        assert!(!feas.contains(&a("Attack(target=guard)")));
        let d = three_rules().feasibility(&a("Attack(target=guard)"), &s, &o);
        assert_eq!(d.rule.as_deref(), Some("no-attack-in-dialogue"));
    }

    #[test]
    fn heal_denied_at_full_health() {
        let w = world();
        let (s, o, avail) = observe(&w);
        let potion = a("Use(item=healing-potion, pathway=inventory-menu)");
        assert!(avail.contains(&potion));
        assert!(!validate(&potion, &avail, &s, &o, &three_rules()));
    }

    #[test]
    fn allow_rule_restricts_its_template() {
        let w = world();
        let (s, o, avail) = observe(&w);
        let mut rules = RuleSet::default();
        rules.feasibility.push(FeasibilityRule {
            id: "only-north".into(),
            action: "Explore(direction=north)".parse().unwrap(),
            conditions: vec![],
            verdict: Verdict::Allow,
            priority: 0,
        });
        let feas = filter_feasible(&instantiate_templates(&avail), &s, &o, &rules);
        let explores: Vec<_> = feas.iter().filter(|x| x.template() == crate::action::Template::Explore).collect();
        assert_eq!(explores, vec![&a("Explore(north)")]);
        assert!(feas.contains(&a("Talk(to=guard)")));
    }

    #[test]
    fn objective_npc_ranked_first() {
        let w = world();
        let (s, o, avail) = observe(&w);
        let feas = filter_feasible(&instantiate_templates(&avail), &s, &o, &three_rules());
        let b = recommend(&s, &o, &feas, &CoverageMap::new("f"), &three_rules(), &RecommendParams::default(), None).unwrap();
        assert_eq!(b.entries[0].action, a("Talk(to=guard)"));
        assert!(b.len() <= DEFAULT_BUNDLE_SIZE);
    }

    #[test]
    fn bundle_never_exceeds_feasible() {
        let w = world();
        let (s, o, _) = observe(&w);
        let feas = vec![a("Explore(north)"), a("Explore(south)"), a("Talk(to=guard)")];
        let b = recommend(&s, &o, &feas, &CoverageMap::new("f"), &three_rules(), &RecommendParams::default(), None).unwrap();
        assert_eq!(b.len(), 3);
        let empty = recommend(&s, &o, &[], &CoverageMap::new("f"), &three_rules(), &RecommendParams::default(), None);
        assert_eq!(empty, Err(ActionSpaceError::EmptyFeasible));
    }

    #[test]
    fn failed_attempts_push_an_action_down() {
        let w = world();
        let (s, o, _) = observe(&w);
        let feas = vec![a("Explore(east)"), a("Explore(north)")];
        let mut cov = CoverageMap::new("f");
        cov.record(&s.key, &a("Explore(east)"), crate::agent::OutcomeTag::NoProgress);
        let b = recommend(&s, &o, &feas, &cov, &RuleSet::default(), &RecommendParams::default(), None).unwrap();
        assert_eq!(b.entries[0].action, a("Explore(north)"));
        assert_eq!(b.entries[1].penalty, 0.5);
    }

    #[test]
    fn text_forms_reject_unknown_templates() {
        assert!(instantiate_text(&["Talk(to=guard)"]).is_ok());
        assert!(matches!(instantiate_text(&["Fly(to=moon)"]), Err(ActionSpaceError::UnknownTemplate(_))));
        assert!(instantiate_text::<&str>(&[]).unwrap().is_empty());
    }
}
