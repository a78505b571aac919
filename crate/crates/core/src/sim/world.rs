use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::{FaultKind, FaultSpec, ItemEffect, Predicate, ScenarioSpec, StepSpec};
use super::spec::{IN_INVENTORY, OUT_OF_WORLD};
use super::SimError;
use crate::action::{ConcreteAction, Direction, Pathway};

/// Number of log lines carried by a snapshot.
pub const LOG_TAIL: usize = 5;
const LOG_KEEP: usize = 32;
/// Health and mana are tracked in thousandths.
const FULL: u32 = 1000;
const OUT_OF_WORLD_COORDS: [i64; 3] = [0, 0, -100_000];
const EMOTES: [&str; 4] = ["idle", "dance", "wave", "sit"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerState {
    pub location: String,
    pub coords: [i64; 3],
    pub hp: f64,
    pub mana: f64,
    pub status_effects: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyNpc {
    pub id: String,
    pub hp: f64,
    pub hostile: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestLog {
    pub id: String,
    /// `None` once every step is complete.
    pub active_step: Option<String>,
    pub counters: BTreeMap<String, u32>,
}

/// Another player wandering past. Never relevant to the quest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bystander {
    pub name: String,
    pub coords: [i64; 3],
    pub emote: String,
}

/// Full observation of the world as the game client would expose it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawState {
    pub tick: u64,
    pub player: PlayerState,
    /// Multiset, sorted.
    pub inventory: Vec<String>,
    pub nearby_npcs: Vec<NearbyNpc>,
    pub nearby_objects: Vec<String>,
    pub quest: QuestLog,
    pub clock_phase: u64,
    pub ambient_noise: Vec<Bystander>,
}

impl RawState {
    pub fn active_counter(&self) -> u32 {
        self.quest
            .active_step
            .as_ref()
            .and_then(|s| self.quest.counters.get(s))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub overlays: BTreeSet<String>,
    pub interactive_button: bool,
    pub entities: Vec<String>,
    pub log_tail: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeStatus {
    Progress,
    NoChange,
    Rejected,
    Crashed,
    Hung,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub status: OutcomeStatus,
    pub duration_ms: u64,
    pub log_line: String,
}

/// Record of an injected fault firing, for ground-truth scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub fault_id: String,
    pub kind: String,
    /// Tick at which the triggering action was executed.
    pub step: u64,
}

/// Ground-truth view of one quest step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTruth {
    pub id: String,
    pub counter: u32,
    pub required: u32,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct NpcState {
    remaining: u32,
    hp: u32,
}

/// Everything that defines the semantic game state. Two worlds with equal
/// cores behave identically from then on, which is what reachability dedupes on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct Core {
    location: String,
    hp: u32,
    in_dialogue: Option<String>,
    in_combat: bool,
    inventory: BTreeMap<String, u32>,
    ground: BTreeMap<String, String>,
    npcs: BTreeMap<String, NpcState>,
    step: usize,
    counters: Vec<u32>,
    hung: BTreeSet<(String, Pathway)>,
}

#[derive(Debug, PartialEq, Eq)]
enum Event {
    Kill(String),
    Talk(String),
    Deliver(String, String),
    Use(String),
}

#[derive(Debug, Clone)]
pub struct WorldState {
    spec: Arc<ScenarioSpec>,
    core: Core,
    tick: u64,
    crashed: bool,
    last_hung: bool,
    log: VecDeque<String>,
    fault_log: Vec<FaultEvent>,
}

impl WorldState {
    pub fn new(spec: ScenarioSpec) -> Result<Self, SimError> {
        Self::from_shared(Arc::new(spec))
    }

    pub fn from_shared(spec: Arc<ScenarioSpec>) -> Result<Self, SimError> {
        spec.validate()?;
        let mut inventory = BTreeMap::new();
        let mut ground = BTreeMap::new();
        for item in &spec.items {
            if item.location == IN_INVENTORY {
                *inventory.entry(item.id.clone()).or_insert(0) += 1;
            } else {
                ground.insert(item.id.clone(), item.location.clone());
            }
        }
        let npcs = spec
            .npcs
            .iter()
            .map(|n| (n.id.clone(), NpcState { remaining: n.count, hp: n.hp }))
            .collect();
        let core = Core {
            location: spec.start.clone(),
            hp: FULL,
            in_dialogue: None,
            in_combat: false,
            inventory,
            ground,
            npcs,
            step: 0,
            counters: vec![0; spec.quest.steps.len()],
            hung: BTreeSet::new(),
        };
        let mut world = WorldState {
            spec,
            core,
            tick: 0,
            crashed: false,
            last_hung: false,
            log: VecDeque::new(),
            fault_log: Vec::new(),
        };
        world.push_log(format!("entered {}", world.core.location));
        // State-based steps may already hold at spawn.
        world.advance_quest(Vec::new());
        Ok(world)
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn shared_spec(&self) -> Arc<ScenarioSpec> {
        Arc::clone(&self.spec)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn is_crashed(&self) -> bool {
        self.crashed
    }

    pub fn location(&self) -> &str {
        &self.core.location
    }

    pub fn fault_log(&self) -> &[FaultEvent] {
        &self.fault_log
    }

    pub fn active_step(&self) -> Option<&StepSpec> {
        self.spec.quest.steps.get(self.core.step)
    }

    pub fn has_item(&self, item: &str) -> bool {
        self.core.inventory.contains_key(item)
    }

    /// Location of a living NPC instance, if any remain.
    pub fn npc_location(&self, id: &str) -> Option<&str> {
        let alive = self.core.npcs.get(id).is_some_and(|n| n.remaining > 0);
        alive.then(|| self.spec.npc(id).map(|n| n.location.as_str())).flatten()
    }

    /// Where an item currently lies, if it is on the ground.
    pub fn item_location(&self, id: &str) -> Option<&str> {
        self.core.ground.get(id).filter(|_| self.spawned(id)).map(String::as_str)
    }

    /// False while the item waits for its spawn step to become active.
    fn spawned(&self, id: &str) -> bool {
        let Some(step) = self.spec.item(id).and_then(|i| i.appears_at.as_deref()) else {
            return true;
        };
        let at = self.spec.quest.steps.iter().position(|s| s.id == step);
        at.is_some_and(|i| i <= self.core.step)
    }

    pub(crate) fn core(&self) -> &Core {
        &self.core
    }

    pub fn read_state(&self) -> Result<RawState, SimError> {
        if self.crashed {
            return Err(SimError::WorldCrashed);
        }
        let c = &self.core;
        let mut status = BTreeSet::new();
        if c.in_dialogue.is_some() {
            status.insert("in-dialogue".to_string());
        }
        if c.in_combat {
            status.insert("in-combat".to_string());
        }
        let coords = match self.spec.location(&c.location) {
            Some(l) => l.coords,
            None => OUT_OF_WORLD_COORDS,
        };
        let inventory = c
            .inventory
            .iter()
            .flat_map(|(id, n)| std::iter::repeat_n(id.clone(), *n as usize))
            .collect();
        let nearby_npcs = self
            .nearby_npcs()
            .map(|(spec, st)| NearbyNpc {
                id: spec.id.clone(),
                hp: st.hp as f64 / spec.hp as f64,
                hostile: spec.hostile,
            })
            .collect();
        let quest = QuestLog {
            id: self.spec.quest.id.clone(),
            active_step: self.active_step().map(|s| s.id.clone()),
            counters: self
                .spec
                .quest
                .steps
                .iter()
                .zip(&c.counters)
                .map(|(s, n)| (s.id.clone(), *n))
                .collect(),
        };
        Ok(RawState {
            tick: self.tick,
            player: PlayerState {
                location: c.location.clone(),
                coords,
                hp: c.hp as f64 / FULL as f64,
                mana: 1.0,
                status_effects: status,
            },
            inventory,
            nearby_npcs,
            nearby_objects: self.nearby_objects().map(str::to_string).collect(),
            quest,
            clock_phase: self.tick % self.spec.day_length,
            ambient_noise: self.bystanders(),
        })
    }

    fn nearby_npcs(&self) -> impl Iterator<Item = (&super::NpcSpec, &NpcState)> {
        self.spec.npcs.iter().filter_map(move |n| {
            let st = &self.core.npcs[&n.id];
            (n.location == self.core.location && st.remaining > 0).then_some((n, st))
        })
    }

    fn nearby_objects(&self) -> impl Iterator<Item = &str> {
        self.core
            .ground
            .iter()
            .filter(move |(id, loc)| **loc == self.core.location && self.spawned(id))
            .map(|(id, _)| id.as_str())
    }

    fn bystanders(&self) -> Vec<Bystander> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.spec.seed, self.tick, 0xA5A5));
        (0..self.spec.bystanders)
            .map(|_| Bystander {
                name: format!("wanderer-{}", rng.gen_range(0..10_000)),
                coords: [
                    rng.gen_range(-50_000..50_000),
                    rng.gen_range(-50_000..50_000),
                    rng.gen_range(0..2_000),
                ],
                emote: EMOTES[rng.gen_range(0..EMOTES.len())].to_string(),
            })
            .collect()
    }

    /// Every syntactically possible action in the current state, relevant or not.
    pub fn enumerate_actions(&self) -> Result<BTreeSet<ConcreteAction>, SimError> {
        if self.crashed {
            return Err(SimError::WorldCrashed);
        }
        let mut out = BTreeSet::new();
        for n in self.spec.neighbours(&self.core.location) {
            out.insert(ConcreteAction::Move { to: n.to_string() });
        }
        for (npc, _) in self.nearby_npcs() {
            out.insert(ConcreteAction::Talk { to: npc.id.clone() });
            out.insert(ConcreteAction::Attack { target: npc.id.clone() });
        }
        for item in self.core.inventory.keys() {
            let spec = self.spec.item(item).expect("inventory holds known items");
            for p in &spec.usable_via {
                out.insert(ConcreteAction::Use { item: item.clone(), pathway: Some(*p) });
            }
        }
        for item in self.nearby_objects() {
            out.insert(ConcreteAction::PickUp { item: item.to_string() });
        }
        for direction in Direction::ALL {
            out.insert(ConcreteAction::Explore { direction });
        }
        Ok(out)
    }

    pub fn execute(&mut self, action: &ConcreteAction) -> Outcome {
        if self.crashed {
            return Outcome {
                status: OutcomeStatus::Crashed,
                duration_ms: 0,
                log_line: "client is not running".into(),
            };
        }
        let tick = self.tick;
        let base = self.base_duration(action, tick);
        self.tick += 1;
        self.last_hung = false;

        let valid = self.enumerate_actions().is_ok_and(|set| set.contains(action));
        if !valid {
            let line = format!("rejected {action}: binding no longer valid");
            self.push_log(line.clone());
            return Outcome { status: OutcomeStatus::Rejected, duration_ms: base, log_line: line };
        }

        let spec = Arc::clone(&self.spec);
        let triggered: Vec<&FaultSpec> =
            spec.faults.iter().filter(|f| self.trigger_holds(f, action)).collect();

        if let ConcreteAction::Use { item, pathway: Some(p) } = action {
            let key = (item.clone(), *p);
            let fresh = triggered.iter().find(
                |f| matches!(f.kind, FaultKind::HangInteraction { pathway } if pathway == *p),
            );
            if self.core.hung.contains(&key) || fresh.is_some() {
                if let Some(f) = fresh.filter(|_| !self.core.hung.contains(&key)) {
                    self.record_fault(f, tick);
                }
                self.core.hung.insert(key);
                self.last_hung = true;
                let line = format!("interaction froze: {action} is not responding");
                self.push_log(line.clone());
                return Outcome { status: OutcomeStatus::Hung, duration_ms: base, log_line: line };
            }
        }

        let before = self.core.clone();
        let (mut line, events) = self.apply(action);
        self.advance_quest(events);

        let mut factor = 1;
        for f in &triggered {
            match f.kind {
                FaultKind::MissingCollider => {
                    self.core.location = OUT_OF_WORLD.to_string();
                    self.core.in_combat = false;
                    line = format!("fell through the ground while exploring {}", dir_of(action));
                    self.record_fault(f, tick);
                }
                FaultKind::Delay { factor: k } => {
                    factor *= k as u64;
                    self.record_fault(f, tick);
                }
                _ => {}
            }
        }
        if let Some(f) = triggered.iter().find(|f| f.kind == FaultKind::Crash) {
            self.record_fault(f, tick);
            self.crashed = true;
            let line = format!("client crashed while executing {action}");
            self.push_log(line.clone());
            return Outcome {
                status: OutcomeStatus::Crashed,
                duration_ms: base * factor,
                log_line: line,
            };
        }
        self.push_log(line.clone());
        let status =
            if self.core != before { OutcomeStatus::Progress } else { OutcomeStatus::NoChange };
        Outcome { status, duration_ms: base * factor, log_line: line }
    }

    fn trigger_holds(&self, fault: &FaultSpec, action: &ConcreteAction) -> bool {
        let t = &fault.trigger;
        let step_ok = t
            .step
            .as_ref()
            .is_none_or(|s| self.active_step().is_some_and(|a| &a.id == s));
        let loc_ok = t.location.as_ref().is_none_or(|l| *l == self.core.location);
        let action_ok = t.action.as_ref().is_none_or(|p| p.matches(action, |_| None));
        step_ok && loc_ok && action_ok
    }

    fn record_fault(&mut self, fault: &FaultSpec, tick: u64) {
        self.fault_log.push(FaultEvent {
            fault_id: fault.id.clone(),
            kind: fault.kind.name().to_string(),
            step: tick,
        });
    }

    fn apply(&mut self, action: &ConcreteAction) -> (String, Vec<Event>) {
        let spec = Arc::clone(&self.spec);
        let c = &mut self.core;
        let dialogue = c.in_dialogue.take();
        match action {
            ConcreteAction::Move { to } => {
                c.location = to.clone();
                c.in_combat = false;
                (format!("moved to {to}"), vec![])
            }
            ConcreteAction::Talk { to } => {
                let npc = spec.npc(to).expect("enumerated npc exists");
                if npc.hostile {
                    c.in_dialogue = dialogue;
                    return (format!("{to} snarls and refuses to talk"), vec![]);
                }
                c.in_dialogue = Some(to.clone());
                c.in_combat = false;
                let mut line = format!("{to}: \"{}\"", npc.dialogue);
                if let Some(g) = &npc.gift {
                    line.push_str(&format!(" (expects {g})"));
                }
                (line, vec![Event::Talk(to.clone())])
            }
            ConcreteAction::Attack { target } => {
                let npc = spec.npc(target).expect("enumerated npc exists");
                if !npc.hostile {
                    c.in_dialogue = dialogue;
                    return (format!("{target} is not hostile"), vec![]);
                }
                let st = c.npcs.get_mut(target).expect("npc state exists");
                st.hp -= 1;
                if st.hp == 0 {
                    st.remaining -= 1;
                    st.hp = npc.hp;
                    c.in_combat = false;
                    return (format!("defeated {target}"), vec![Event::Kill(npc.class().to_string())]);
                }
                c.in_combat = true;
                let dmg = (npc.damage * FULL as f64).round() as u32;
                c.hp = c.hp.saturating_sub(dmg);
                if c.hp == 0 {
                    c.location = spec.start.clone();
                    c.hp = FULL;
                    c.in_combat = false;
                    return (format!("struck down by {target}; respawned at {}", spec.start), vec![]);
                }
                (format!("hit {target}; {target} strikes back"), vec![])
            }
            ConcreteAction::Use { item, .. } => {
                let item_spec = spec.item(item).expect("inventory holds known items");
                if let Some(npc) = dialogue {
                    if spec.npc(&npc).and_then(|n| n.gift.as_deref()) == Some(item.as_str()) {
                        take_one(&mut c.inventory, item);
                        return (format!("gave {item} to {npc}"), vec![Event::Deliver(item.clone(), npc)]);
                    }
                }
                let mut line = format!("used {item}");
                if let Some(ItemEffect::Heal(f)) = item_spec.effect {
                    c.hp = (c.hp + (f * FULL as f64).round() as u32).min(FULL);
                    line.push_str("; health restored");
                }
                if item_spec.consumable {
                    take_one(&mut c.inventory, item);
                }
                (line, vec![Event::Use(item.clone())])
            }
            ConcreteAction::PickUp { item } => {
                c.ground.remove(item);
                *c.inventory.entry(item.clone()).or_insert(0) += 1;
                (format!("picked up {item}"), vec![])
            }
            ConcreteAction::Explore { direction } => {
                if c.location == OUT_OF_WORLD {
                    c.location = spec.start.clone();
                    return (format!("found a way back to {}", spec.start), vec![]);
                }
                c.in_dialogue = dialogue;
                (format!("nothing of interest to the {}", direction.as_str()), vec![])
            }
        }
    }

    fn logic_threshold(&self, step: &StepSpec) -> Option<(&FaultSpec, u32)> {
        self.spec.faults.iter().find_map(|f| match f.kind {
            FaultKind::LogicStepCount { off_by } if f.trigger.step.as_ref() == Some(&step.id) => {
                Some((f, step.predicate.required() - off_by))
            }
            _ => None,
        })
    }

    fn advance_quest(&mut self, mut events: Vec<Event>) {
        let spec = Arc::clone(&self.spec);
        while let Some(step) = spec.quest.steps.get(self.core.step) {
            let i = self.core.step;
            let c = &mut self.core;
            match &step.predicate {
                Predicate::KillCount { npc_class, .. } => {
                    c.counters[i] += events.iter().filter(|e| **e == Event::Kill(npc_class.clone())).count() as u32;
                }
                Predicate::Talk { npc } => {
                    if events.contains(&Event::Talk(npc.clone())) {
                        c.counters[i] = 1;
                    }
                }
                Predicate::Deliver { item, npc } => {
                    if events.contains(&Event::Deliver(item.clone(), npc.clone())) {
                        c.counters[i] = 1;
                    }
                }
                Predicate::Use { item } => {
                    if events.contains(&Event::Use(item.clone())) {
                        c.counters[i] = 1;
                    }
                }
                Predicate::Reach { location } => {
                    c.counters[i] = c.counters[i].max((c.location == *location) as u32);
                }
                Predicate::Pickup { item } => {
                    c.counters[i] = c.counters[i].max(c.inventory.contains_key(item) as u32);
                }
            }
            let counter = self.core.counters[i];
            let required = step.predicate.required();
            let (threshold, fault) = match self.logic_threshold(step) {
                Some((f, t)) => (t, Some(f.clone())),
                None => (required, None),
            };
            if counter < threshold {
                break;
            }
            if counter < required {
                if let Some(f) = fault {
                    self.record_fault(&f, self.tick.saturating_sub(1));
                }
            }
            self.push_log(format!("quest step `{}` complete", step.id));
            self.core.step += 1;
            events.clear();
        }
    }

    fn base_duration(&self, action: &ConcreteAction, tick: u64) -> u64 {
        let base = self.spec.durations.base(action.template());
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.spec.seed, tick, fnv1a(&action.canonical())));
        let jitter: f64 = rng.gen_range(0.9..=1.1);
        (base as f64 * jitter).round() as u64
    }

    fn push_log(&mut self, line: String) {
        if self.log.len() == LOG_KEEP {
            self.log.pop_front();
        }
        self.log.push_back(line);
    }

    pub fn capture_snapshot(&self) -> Snapshot {
        let mut overlays = BTreeSet::new();
        if self.core.in_dialogue.is_some() {
            overlays.insert("dialogue".to_string());
        }
        if self.core.in_combat {
            overlays.insert("combat".to_string());
        }
        if self.last_hung {
            overlays.insert("unresponsive".to_string());
        }
        if self.crashed {
            overlays.insert("crash-report".to_string());
        }
        let screen_item = self.core.inventory.keys().any(|id| {
            self.spec.item(id).is_some_and(|i| i.usable_via.contains(&Pathway::ScreenButton))
        });
        let mut entities = vec![format!("player@{}", self.core.location)];
        entities.extend(self.nearby_npcs().map(|(n, _)| format!("npc:{}", n.id)));
        entities.extend(self.nearby_objects().map(|i| format!("item:{i}")));
        let skip = self.log.len().saturating_sub(LOG_TAIL);
        Snapshot {
            tick: self.tick,
            overlays,
            interactive_button: !self.crashed
                && (self.core.in_dialogue.is_some() || screen_item),
            entities,
            log_tail: self.log.iter().skip(skip).cloned().collect(),
        }
    }

    /// Completion as the (possibly faulty) game reports it.
    pub fn task_complete(&self, quest_id: &str) -> Result<bool, SimError> {
        if quest_id != self.spec.quest.id {
            return Err(SimError::UnknownQuest(quest_id.to_string()));
        }
        Ok(self.core.step >= self.spec.quest.steps.len())
    }

    /// Per-step counters against the specified requirement, ignoring faults.
    pub fn ground_truth(&self) -> Vec<StepTruth> {
        self.spec
            .quest
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| StepTruth {
                id: s.id.clone(),
                counter: self.core.counters[i],
                required: s.predicate.required(),
                completed: i < self.core.step,
            })
            .collect()
    }

    /// Fraction of key steps done, with partial credit for counted steps.
    pub fn key_progress(&self) -> f64 {
        let steps = &self.spec.quest.steps;
        let keys: Vec<usize> = (0..steps.len()).filter(|i| steps[*i].key_state).collect();
        if keys.is_empty() {
            return if self.core.step >= steps.len() { 1.0 } else { 0.0 };
        }
        let done: f64 = keys
            .iter()
            .map(|&i| {
                if i < self.core.step {
                    1.0
                } else {
                    let req = steps[i].predicate.required() as f64;
                    (self.core.counters[i] as f64 / req).min(1.0)
                }
            })
            .sum();
        done / keys.len() as f64
    }
}

fn take_one(inv: &mut BTreeMap<String, u32>, item: &str) {
    if let Some(n) = inv.get_mut(item) {
        *n -= 1;
        if *n == 0 {
            inv.remove(item);
        }
    }
}

fn dir_of(action: &ConcreteAction) -> &'static str {
    match action {
        ConcreteAction::Explore { direction } => direction.as_str(),
        _ => "",
    }
}

fn mix(seed: u64, tick: u64, salt: u64) -> u64 {
    seed ^ tick.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt.rotate_left(17)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::super::spec::fixtures::minimal_talk;
    use super::super::spec::*;
    use super::*;
    use crate::action::Template;

    fn act(s: &str) -> ConcreteAction {
        s.parse().unwrap()
    }

    fn arena(kills: u32, off_by: Option<u32>) -> ScenarioSpec {
        let mut s = minimal_talk();
        s.npcs.push(NpcSpec {
            id: "wolf".into(),
            location: "hall".into(),
            hostile: true,
            hp: 1,
            dialogue: String::new(),
            gift: None,
            class: None,
            count: kills,
            damage: 0.0,
        });
        s.quest.steps[0].predicate = Predicate::KillCount { npc_class: "wolf".into(), n: kills };
        if let Some(off_by) = off_by {
            s.faults.push(FaultSpec {
                id: "early".into(),
                kind: FaultKind::LogicStepCount { off_by },
                trigger: Trigger { step: Some("s0".into()), ..Trigger::default() },
            });
        }
        s
    }

    fn orb_spec(hang: bool) -> ScenarioSpec {
        let mut s = minimal_talk();
        s.items.push(ItemSpec {
            id: "orb".into(),
            location: IN_INVENTORY.into(),
            usable_via: Pathway::ALL.into_iter().collect(),
            effect: None,
            consumable: false,
            appears_at: None,
        });
        s.quest.steps[0].predicate = Predicate::Use { item: "orb".into() };
        if hang {
            s.faults.push(FaultSpec {
                id: "freeze".into(),
                kind: FaultKind::HangInteraction { pathway: Pathway::ScreenButton },
                trigger: Trigger { action: Some("Use(item=orb)".parse().unwrap()), ..Trigger::default() },
            });
        }
        s
    }

    #[test]
    fn fresh_world_observation() {
        let w = WorldState::new(minimal_talk()).unwrap();
        let raw = w.read_state().unwrap();
        assert_eq!(raw.tick, 0);
        assert_eq!(raw.player.hp, 1.0);
        assert_eq!(raw.quest.active_step.as_deref(), Some("s0"));
        assert!(!raw.ambient_noise.is_empty());
        assert_eq!(w.read_state().unwrap(), raw);
        let snap = w.capture_snapshot();
        assert!(snap.overlays.is_empty());
        assert!(!snap.interactive_button);
    }

    #[test]
    fn unknown_npc_location_rejected_at_construction() {
        let mut s = minimal_talk();
        s.npcs[0].location = "void".into();
        assert!(matches!(WorldState::new(s), Err(SimError::SpecInvalid(_))));
    }

    #[test]
    fn dead_end_room_enumeration() {
        let mut s = minimal_talk();
        s.npcs.clear();
        s.quest.steps[0].predicate = Predicate::Reach { location: "cellar".into() };
        s.locations.push(LocationSpec { id: "cellar".into(), coords: [0, 0, -300] });
        s.edges.push(("hall".into(), "cellar".into()));
        let w = WorldState::new(s).unwrap();
        let mut expected: BTreeSet<ConcreteAction> =
            Direction::ALL.into_iter().map(|direction| ConcreteAction::Explore { direction }).collect();
        expected.insert(act("Move(to=cellar)"));
        assert_eq!(w.enumerate_actions().unwrap(), expected);
    }

    #[test]
    fn nearby_npc_offers_talk_and_attack() {
        let w = WorldState::new(minimal_talk()).unwrap();
        let set = w.enumerate_actions().unwrap();
        assert!(set.contains(&act("Talk(to=guard)")));
        assert!(set.contains(&act("Attack(target=guard)")));
    }

    #[test]
    fn dual_pathway_item_yields_two_use_actions() {
        let w = WorldState::new(orb_spec(false)).unwrap();
        let uses: Vec<_> = w
            .enumerate_actions()
            .unwrap()
            .into_iter()
            .filter(|a| a.template() == Template::Use)
            .collect();
        assert_eq!(
            uses,
            vec![
                act("Use(item=orb, pathway=screen-button)"),
                act("Use(item=orb, pathway=inventory-menu)")
            ]
        );
    }

    #[test]
    fn killing_one_hp_hostile_counts() {
        let mut w = WorldState::new(arena(2, None)).unwrap();
        let o = w.execute(&act("Attack(target=wolf)"));
        assert_eq!(o.status, OutcomeStatus::Progress);
        assert_eq!(w.ground_truth()[0].counter, 1);
        assert!(!w.task_complete("q").unwrap());
    }

    #[test]
    fn last_kill_removes_npc() {
        let mut w = WorldState::new(arena(1, None)).unwrap();
        w.execute(&act("Attack(target=wolf)"));
        let raw = w.read_state().unwrap();
        assert!(raw.nearby_npcs.iter().all(|n| n.id != "wolf"));
        assert!(w.task_complete("q").unwrap());
    }

    #[test]
    fn off_by_one_completes_after_five_of_six() {
        let mut w = WorldState::new(arena(6, Some(1))).unwrap();
        for _ in 0..4 {
            w.execute(&act("Attack(target=wolf)"));
        }
        assert!(!w.task_complete("q").unwrap());
        w.execute(&act("Attack(target=wolf)"));
        assert!(w.task_complete("q").unwrap());
        let truth = &w.ground_truth()[0];
        assert_eq!((truth.counter, truth.required, truth.completed), (5, 6, true));
        assert_eq!(w.fault_log().len(), 1);
    }

    #[test]
    fn five_of_six_without_fault_is_incomplete() {
        let mut w = WorldState::new(arena(6, None)).unwrap();
        for _ in 0..5 {
            w.execute(&act("Attack(target=wolf)"));
        }
        assert!(!w.task_complete("q").unwrap());
    }

    #[test]
    fn hang_affects_only_its_pathway() {
        let mut w = WorldState::new(orb_spec(true)).unwrap();
        let hung = w.execute(&act("Use(item=orb, pathway=screen-button)"));
        assert_eq!(hung.status, OutcomeStatus::Hung);
        assert_eq!(w.capture_snapshot().log_tail.last(), Some(&hung.log_line));
        let again = w.execute(&act("Use(item=orb, pathway=screen-button)"));
        assert_eq!(again.status, OutcomeStatus::Hung);
        let ok = w.execute(&act("Use(item=orb, pathway=inventory-menu)"));
        assert_eq!(ok.status, OutcomeStatus::Progress);
        assert!(w.task_complete("q").unwrap());
        assert_eq!(w.fault_log().len(), 1);
    }

    #[test]
    fn talk_opens_dialogue_and_looking_around_keeps_it() {
        let mut w = WorldState::new(minimal_talk()).unwrap();
        w.execute(&act("Talk(to=guard)"));
        assert!(w.capture_snapshot().overlays.contains("dialogue"));
        assert!(w.capture_snapshot().interactive_button);
        w.execute(&act("Explore(north)"));
        assert!(w.capture_snapshot().overlays.contains("dialogue"));
    }

    #[test]
    fn counterattack_damage_accumulates() {
        let mut s = arena(1, None);
        s.npcs[1].hp = 10;
        s.npcs[1].damage = 0.17;
        let mut w = WorldState::new(s).unwrap();
        for _ in 0..5 {
            w.execute(&act("Attack(target=wolf)"));
        }
        // Five strikes of 17% each.
        let expected = 1.0 - 5.0 * 0.17;
        assert!((w.read_state().unwrap().player.hp - expected).abs() < 1e-9);
    }

    #[test]
    fn stale_binding_is_rejected() {
        let mut w = WorldState::new(minimal_talk()).unwrap();
        let o = w.execute(&act("Talk(to=ghost)"));
        assert_eq!(o.status, OutcomeStatus::Rejected);
        assert_eq!(w.tick(), 1);
    }

    #[test]
    fn crash_is_terminal() {
        let mut s = minimal_talk();
        s.faults.push(FaultSpec {
            id: "boom".into(),
            kind: FaultKind::Crash,
            trigger: Trigger { action: Some("Talk(to=guard)".parse().unwrap()), ..Trigger::default() },
        });
        let mut w = WorldState::new(s).unwrap();
        assert_eq!(w.execute(&act("Talk(to=guard)")).status, OutcomeStatus::Crashed);
        assert_eq!(w.read_state(), Err(SimError::WorldCrashed));
        assert_eq!(w.enumerate_actions(), Err(SimError::WorldCrashed));
        assert_eq!(w.fault_log()[0].step, 0);
    }

    #[test]
    fn missing_collider_drops_player_out_of_world() {
        let mut s = minimal_talk();
        s.faults.push(FaultSpec {
            id: "hole".into(),
            kind: FaultKind::MissingCollider,
            trigger: Trigger {
                action: Some("Explore(direction=west)".parse().unwrap()),
                location: Some("hall".into()),
                step: None,
            },
        });
        let mut w = WorldState::new(s).unwrap();
        assert_eq!(w.execute(&act("Explore(east)")).status, OutcomeStatus::NoChange);
        assert_eq!(w.execute(&act("Explore(west)")).status, OutcomeStatus::Progress);
        assert_eq!(w.read_state().unwrap().player.location, OUT_OF_WORLD);
    }

    #[test]
    fn delay_multiplies_duration() {
        let mut s = minimal_talk();
        s.faults.push(FaultSpec {
            id: "slow".into(),
            kind: FaultKind::Delay { factor: 10 },
            trigger: Trigger { action: Some("Talk(to=guard)".parse().unwrap()), ..Trigger::default() },
        });
        let mut w = WorldState::new(s).unwrap();
        let d = w.execute(&act("Talk(to=guard)")).duration_ms;
        assert!((9_000..=11_000).contains(&d), "{d}");
        let e = w.execute(&act("Explore(north)")).duration_ms;
        assert!((1_350..=1_650).contains(&e), "{e}");
    }

    #[test]
    fn unknown_quest_id() {
        let w = WorldState::new(minimal_talk()).unwrap();
        assert_eq!(w.task_complete("other"), Err(SimError::UnknownQuest("other".into())));
    }

    #[test]
    fn quest_items_appear_with_their_step() {
        let mut s = minimal_talk();
        s.items.push(ItemSpec {
            id: "key".into(),
            location: "hall".into(),
            usable_via: [Pathway::InventoryMenu].into(),
            effect: None,
            consumable: false,
            appears_at: Some("fetch".into()),
        });
        s.quest.steps.push(StepSpec {
            id: "fetch".into(),
            description: "take the key".into(),
            predicate: Predicate::Pickup { item: "key".into() },
            key_state: true,
        });
        let mut w = WorldState::new(s).unwrap();
        assert!(w.read_state().unwrap().nearby_objects.is_empty());
        assert_eq!(w.item_location("key"), None);
        assert!(!w.enumerate_actions().unwrap().contains(&act("PickUp(item=key)")));
        w.execute(&act("Talk(to=guard)"));
        assert_eq!(w.read_state().unwrap().nearby_objects, vec!["key".to_string()]);
        assert_eq!(w.item_location("key"), Some("hall"));
        w.execute(&act("PickUp(item=key)"));
        assert!(w.task_complete("q").unwrap());
    }
}
