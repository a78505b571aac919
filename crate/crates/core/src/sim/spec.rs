//! Scenario documents (`scenario-v1`) and their validation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::action::{ActionPattern, Pathway, Template};

pub const SCENARIO_SCHEMA: &str = "scenario-v1";

/// Synthetic location the player lands in after clipping through geometry.
pub const OUT_OF_WORLD: &str = "out-of-world";

/// Item location marker for items the player starts with.
pub const IN_INVENTORY: &str = "inventory";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Simple,
    Normal,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationSpec {
    pub id: String,
    /// Fixed-point world coordinates, 1 unit = 0.01 m.
    #[serde(default)]
    pub coords: [i64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcSpec {
    pub id: String,
    pub location: String,
    #[serde(default)]
    pub hostile: bool,
    /// Hit points of one instance; each attack removes one.
    #[serde(default = "one")]
    pub hp: u32,
    #[serde(default)]
    pub dialogue: String,
    /// Item the NPC expects as a gift during dialogue.
    #[serde(default)]
    pub gift: Option<String>,
    /// Class name used by kill-count steps; defaults to the id.
    #[serde(default)]
    pub class: Option<String>,
    /// Number of identical instances that appear one after another.
    #[serde(default = "one")]
    pub count: u32,
    /// Fraction of player health removed when the NPC strikes back.
    #[serde(default)]
    pub damage: f64,
}

impl NpcSpec {
    pub fn class(&self) -> &str {
        self.class.as_deref().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ItemEffect {
    /// Restores the given fraction of maximum health.
    Heal(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub id: String,
    /// A location id, or `"inventory"`.
    pub location: String,
    pub usable_via: BTreeSet<Pathway>,
    #[serde(default)]
    pub effect: Option<ItemEffect>,
    #[serde(default)]
    pub consumable: bool,
    /// Step id from which the item lies on the ground; before that step is
    /// active the item is not in the world.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appears_at: Option<String>,
}

/// Declarative step completion predicate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Predicate {
    KillCount { npc_class: String, n: u32 },
    Reach { location: String },
    Deliver { item: String, npc: String },
    Talk { npc: String },
    Pickup { item: String },
    Use { item: String },
}

impl Predicate {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Predicate::KillCount { .. } => "kill-count",
            Predicate::Reach { .. } => "reach",
            Predicate::Deliver { .. } => "deliver",
            Predicate::Talk { .. } => "talk",
            Predicate::Pickup { .. } => "pickup",
            Predicate::Use { .. } => "use",
        }
    }

    /// Counter value that satisfies the predicate.
    pub fn required(&self) -> u32 {
        match self {
            Predicate::KillCount { n, .. } => *n,
            _ => 1,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Predicate::KillCount { npc_class, n } => format!("kill-count({npc_class}, {n})"),
            Predicate::Reach { location } => format!("reach({location})"),
            Predicate::Deliver { item, npc } => format!("deliver({item}, {npc})"),
            Predicate::Talk { npc } => format!("talk({npc})"),
            Predicate::Pickup { item } => format!("pickup({item})"),
            Predicate::Use { item } => format!("use({item})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub predicate: Predicate,
    #[serde(default = "yes")]
    pub key_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestSpec {
    pub id: String,
    pub description: String,
    pub steps: Vec<StepSpec>,
}

/// Kind-specific fault behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FaultKind {
    /// The client terminates after the triggering action.
    Crash,
    /// The given use pathway freezes for the triggering item, permanently.
    HangInteraction { pathway: Pathway },
    /// The step named by the trigger completes `off_by` counts early.
    LogicStepCount { off_by: u32 },
    /// Exploring in the trigger direction drops the player out of the world.
    MissingCollider,
    /// The triggering action takes `factor` times longer.
    Delay { factor: u32 },
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::Crash => "crash",
            FaultKind::HangInteraction { .. } => "hang-interaction",
            FaultKind::LogicStepCount { .. } => "logic-step-count",
            FaultKind::MissingCollider => "missing-collider",
            FaultKind::Delay { .. } => "delay",
        }
    }
}

/// Action pattern plus state predicate. Every present field must hold.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionPattern>,
    /// Active quest step id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<String>,
    /// Player location.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: FaultKind,
    #[serde(default)]
    pub trigger: Trigger,
}

/// Base duration in simulated milliseconds per action template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct DurationTable {
    pub r#move: u64,
    pub talk: u64,
    pub attack: u64,
    pub r#use: u64,
    pub pickup: u64,
    pub explore: u64,
}

impl Default for DurationTable {
    fn default() -> Self {
        DurationTable { r#move: 2000, talk: 1000, attack: 800, r#use: 1000, pickup: 600, explore: 1500 }
    }
}

impl DurationTable {
    pub fn base(&self, template: Template) -> u64 {
        match template {
            Template::Move => self.r#move,
            Template::Talk => self.talk,
            Template::Attack => self.attack,
            Template::Use => self.r#use,
            Template::PickUp => self.pickup,
            Template::Explore => self.explore,
        }
    }
}

/// A complete scenario: map, population, one quest, and injected faults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub schema: String,
    pub id: String,
    /// Groups runs that share coverage memory and timing baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub start: String,
    pub locations: Vec<LocationSpec>,
    /// Undirected adjacency.
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub npcs: Vec<NpcSpec>,
    #[serde(default)]
    pub items: Vec<ItemSpec>,
    pub quest: QuestSpec,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub durations: DurationTable,
    /// Ticks per day cycle reported in the clock phase.
    #[serde(default = "default_day_length")]
    pub day_length: u64,
    /// Other-player stubs that appear in every raw state.
    #[serde(default = "default_bystanders")]
    pub bystanders: u32,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

fn default_day_length() -> u64 {
    100_000
}

fn default_bystanders() -> u32 {
    2
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let spec: ScenarioSpec =
            serde_json::from_str(text).map_err(|e| SimError::SpecInvalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn family(&self) -> &str {
        self.family.as_deref().unwrap_or(&self.id)
    }

    pub fn location(&self, id: &str) -> Option<&LocationSpec> {
        self.locations.iter().find(|l| l.id == id)
    }

    pub fn npc(&self, id: &str) -> Option<&NpcSpec> {
        self.npcs.iter().find(|n| n.id == id)
    }

    pub fn item(&self, id: &str) -> Option<&ItemSpec> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn neighbours(&self, id: &str) -> BTreeSet<&str> {
        self.edges
            .iter()
            .filter_map(|(a, b)| {
                if a == id {
                    Some(b.as_str())
                } else if b == id {
                    Some(a.as_str())
                } else {
                    None
                }
            })
            .collect()
    }

    /// Shortest path (by hop count, ties broken by id order) from `from` to
    /// `to`, excluding `from`. Empty when already there or unreachable.
    pub fn path(&self, from: &str, to: &str) -> Vec<String> {
        if from == to {
            return Vec::new();
        }
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                break;
            }
            for n in self.neighbours(cur) {
                if seen.insert(n) {
                    prev.insert(n, cur);
                    queue.push_back(n);
                }
            }
        }
        if !prev.contains_key(to) {
            return Vec::new();
        }
        let mut path = vec![to.to_string()];
        let mut cur = to;
        while let Some(&p) = prev.get(cur) {
            if p == from {
                break;
            }
            path.push(p.to_string());
            cur = p;
        }
        path.reverse();
        path
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::SpecInvalid(msg));
        if self.schema != SCENARIO_SCHEMA {
            return bad(format!("unsupported schema `{}`", self.schema));
        }
        let mut loc_ids = BTreeSet::new();
        for l in &self.locations {
            if l.id == OUT_OF_WORLD || l.id == IN_INVENTORY {
                return bad(format!("location id `{}` is reserved", l.id));
            }
            if !loc_ids.insert(l.id.as_str()) {
                return bad(format!("duplicate location `{}`", l.id));
            }
        }
        if !loc_ids.contains(self.start.as_str()) {
            return bad(format!("start location `{}` does not exist", self.start));
        }
        for (a, b) in &self.edges {
            for end in [a, b] {
                if !loc_ids.contains(end.as_str()) {
                    return bad(format!("edge references unknown location `{end}`"));
                }
            }
        }
        let mut reached = BTreeSet::from([self.start.as_str()]);
        let mut queue = VecDeque::from([self.start.as_str()]);
        while let Some(cur) = queue.pop_front() {
            for n in self.neighbours(cur) {
                if reached.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        if reached.len() != loc_ids.len() {
            let missing: Vec<_> = loc_ids.difference(&reached).collect();
            return bad(format!("location graph is disconnected; unreachable: {missing:?}"));
        }

        let mut entity_ids = BTreeSet::new();
        for n in &self.npcs {
            if !entity_ids.insert(n.id.as_str()) {
                return bad(format!("duplicate entity id `{}`", n.id));
            }
            if !loc_ids.contains(n.location.as_str()) {
                return bad(format!("npc `{}` placed at unknown location `{}`", n.id, n.location));
            }
            if n.hp == 0 || n.count == 0 {
                return bad(format!("npc `{}` needs hp >= 1 and count >= 1", n.id));
            }
            if !(0.0..=1.0).contains(&n.damage) {
                return bad(format!("npc `{}` damage must be a fraction", n.id));
            }
        }
        for i in &self.items {
            if !entity_ids.insert(i.id.as_str()) {
                return bad(format!("duplicate entity id `{}`", i.id));
            }
            if i.location != IN_INVENTORY && !loc_ids.contains(i.location.as_str()) {
                return bad(format!("item `{}` placed at unknown location `{}`", i.id, i.location));
            }
            if i.usable_via.is_empty() {
                return bad(format!("item `{}` has no usable pathway", i.id));
            }
            if let Some(step) = &i.appears_at {
                if i.location == IN_INVENTORY {
                    return bad(format!("item `{}` starts in the inventory but has a spawn step", i.id));
                }
                if !self.quest.steps.iter().any(|s| &s.id == step) {
                    return bad(format!("item `{}` spawns at unknown step `{step}`", i.id));
                }
            }
        }
        for n in &self.npcs {
            if let Some(g) = &n.gift {
                if self.item(g).is_none() {
                    return bad(format!("npc `{}` expects unknown gift `{g}`", n.id));
                }
            }
        }

        let classes: BTreeSet<&str> = self.npcs.iter().map(|n| n.class()).collect();
        if self.quest.steps.is_empty() {
            return bad(format!("quest `{}` has no steps", self.quest.id));
        }
        let mut step_ids = BTreeSet::new();
        for s in &self.quest.steps {
            if !step_ids.insert(s.id.as_str()) {
                return bad(format!("duplicate step id `{}`", s.id));
            }
            let ok = match &s.predicate {
                Predicate::KillCount { npc_class, n } => {
                    if *n == 0 {
                        return bad(format!("step `{}`: kill-count n must be >= 1", s.id));
                    }
                    classes.contains(npc_class.as_str())
                }
                Predicate::Reach { location } => loc_ids.contains(location.as_str()),
                Predicate::Deliver { item, npc } => {
                    self.item(item).is_some() && self.npc(npc).is_some()
                }
                Predicate::Talk { npc } => self.npc(npc).is_some(),
                Predicate::Pickup { item } | Predicate::Use { item } => self.item(item).is_some(),
            };
            if !ok {
                return bad(format!("step `{}` references an unknown entity", s.id));
            }
        }

        let mut fault_ids = BTreeSet::new();
        for f in &self.faults {
            if !fault_ids.insert(f.id.as_str()) {
                return bad(format!("duplicate fault id `{}`", f.id));
            }
            self.validate_fault(f, &loc_ids, &entity_ids, &step_ids)?;
        }
        Ok(())
    }

    fn validate_fault(
        &self,
        f: &FaultSpec,
        locs: &BTreeSet<&str>,
        entities: &BTreeSet<&str>,
        steps: &BTreeSet<&str>,
    ) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::SpecInvalid(format!("fault `{}`: {msg}", f.id)));
        let t = &f.trigger;
        if let Some(step) = &t.step {
            if !steps.contains(step.as_str()) {
                return bad("trigger references unknown step");
            }
        }
        if let Some(loc) = &t.location {
            if !locs.contains(loc.as_str()) {
                return bad("trigger references unknown location");
            }
        }
        if let Some(p) = &t.action {
            for slot in p.bindings.keys() {
                if let Some(v) = p.literal(slot) {
                    let known = match *slot {
                        "to" if p.template == Template::Move => locs.contains(v),
                        "to" | "target" | "item" => entities.contains(v),
                        _ => true,
                    };
                    if !known {
                        return bad("trigger action references unknown entity");
                    }
                }
            }
            if p.refs().next().is_some() {
                return bad("trigger action may not use references");
            }
        }
        match &f.kind {
            FaultKind::Crash | FaultKind::Delay { .. } if t.action.is_none() => {
                bad("needs an action pattern")
            }
            FaultKind::Delay { factor } if *factor < 1 => bad("delay factor must be >= 1"),
            FaultKind::HangInteraction { .. } => match &t.action {
                Some(p) if p.template == Template::Use && p.literal("item").is_some() => Ok(()),
                _ => bad("hang trigger must be a Use pattern naming an item"),
            },
            FaultKind::LogicStepCount { off_by } => {
                if *off_by < 1 {
                    return bad("off-by amount must be >= 1");
                }
                let Some(step) = t.step.as_deref() else {
                    return bad("logic fault needs a step");
                };
                let spec = self.quest.steps.iter().find(|s| s.id == step).expect("checked");
                if spec.predicate.required() <= *off_by {
                    return bad("off-by amount must leave a positive threshold");
                }
                Ok(())
            }
            FaultKind::MissingCollider => match (&t.location, &t.action) {
                (Some(_), Some(p)) if p.template == Template::Explore => Ok(()),
                _ => bad("missing collider needs a location and an Explore pattern"),
            },
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One location, one friendly NPC, one talk step.
    pub fn minimal_talk() -> ScenarioSpec {
        ScenarioSpec {
            schema: SCENARIO_SCHEMA.into(),
            id: "minimal".into(),
            family: None,
            difficulty: Difficulty::Simple,
            seed: 1,
            start: "hall".into(),
            locations: vec![LocationSpec { id: "hall".into(), coords: [0, 0, 0] }],
            edges: vec![],
            npcs: vec![NpcSpec {
                id: "guard".into(),
                location: "hall".into(),
                hostile: false,
                hp: 1,
                dialogue: "greet".into(),
                gift: None,
                class: None,
                count: 1,
                damage: 0.0,
            }],
            items: vec![],
            quest: QuestSpec {
                id: "q".into(),
                description: "Greet the guard".into(),
                steps: vec![StepSpec {
                    id: "s0".into(),
                    description: "talk to the guard".into(),
                    predicate: Predicate::Talk { npc: "guard".into() },
                    key_state: true,
                }],
            },
            faults: vec![],
            durations: DurationTable::default(),
            day_length: default_day_length(),
            bystanders: 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::minimal_talk;
    use super::*;

    #[test]
    fn minimal_spec_validates() {
        minimal_talk().validate().unwrap();
    }

    #[test]
    fn unknown_npc_location_is_invalid() {
        let mut s = minimal_talk();
        s.npcs[0].location = "nowhere".into();
        assert!(matches!(s.validate(), Err(SimError::SpecInvalid(_))));
    }

    #[test]
    fn disconnected_graph_is_invalid() {
        let mut s = minimal_talk();
        s.locations.push(LocationSpec { id: "island".into(), coords: [100, 0, 0] });
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("disconnected"), "{err}");
    }

    #[test]
    fn kill_count_zero_is_invalid() {
        let mut s = minimal_talk();
        s.npcs[0].hostile = true;
        s.quest.steps[0].predicate = Predicate::KillCount { npc_class: "guard".into(), n: 0 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn spawn_step_must_exist() {
        let mut s = minimal_talk();
        s.items.push(ItemSpec {
            id: "key".into(),
            location: "hall".into(),
            usable_via: [Pathway::InventoryMenu].into(),
            effect: None,
            consumable: false,
            appears_at: Some("later".into()),
        });
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("later"), "{err}");
        s.items[0].appears_at = Some("s0".into());
        s.validate().unwrap();
    }

    #[test]
    fn path_prefers_fewest_hops() {
        let mut s = minimal_talk();
        for id in ["a", "b", "c"] {
            s.locations.push(LocationSpec { id: id.into(), coords: [0, 0, 0] });
        }
        s.edges = vec![
            ("hall".into(), "a".into()),
            ("a".into(), "b".into()),
            ("b".into(), "c".into()),
            ("hall".into(), "c".into()),
        ];
        assert_eq!(s.path("hall", "b"), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(s.path("hall", "c"), vec!["c".to_string()]);
        assert!(s.path("hall", "hall").is_empty());
    }

    #[test]
    fn json_round_trip_keeps_faults() {
        let mut s = minimal_talk();
        s.faults.push(FaultSpec {
            id: "f1".into(),
            kind: FaultKind::Crash,
            trigger: Trigger {
                action: Some("Talk(to=guard)".parse().unwrap()),
                step: Some("s0".into()),
                location: None,
            },
        });
        let back = ScenarioSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
