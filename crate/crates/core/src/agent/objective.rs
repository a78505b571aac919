use serde::{Deserialize, Serialize};

use crate::sim::{Predicate, WorldState};

/// The current quest objective, resolved against the live world so rules
/// can refer to `$objective.npc`, `$objective.next_hop` and friends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    pub quest_id: String,
    pub quest_description: String,
    /// `None` once the quest is complete.
    pub step_id: Option<String>,
    pub step_description: String,
    /// Predicate kind of the active step, or `complete`.
    pub kind: String,
    pub npc: Option<String>,
    pub item: Option<String>,
    /// Where the player should be for the next useful interaction.
    pub location: Option<String>,
    /// First hop of the shortest path towards `location`.
    pub next_hop: Option<String>,
    pub counter: u32,
    pub required: u32,
}

impl Objective {
    pub fn resolve(world: &WorldState) -> Objective {
        let spec = world.spec();
        let quest = &spec.quest;
        let Some(step) = world.active_step() else {
            return Objective {
                quest_id: quest.id.clone(),
                quest_description: quest.description.clone(),
                step_id: None,
                step_description: "all steps complete".into(),
                kind: "complete".into(),
                npc: None,
                item: None,
                location: None,
                next_hop: None,
                counter: 0,
                required: 0,
            };
        };
        let here = world.location();
        let npc_loc = |id: &str| world.npc_location(id).map(str::to_string);
        let (npc, item, location) = match &step.predicate {
            Predicate::KillCount { npc_class, .. } => {
                let target = spec
                    .npcs
                    .iter()
                    .filter(|n| n.class() == npc_class)
                    .find(|n| world.npc_location(&n.id).is_some());
                let loc = target.and_then(|n| npc_loc(&n.id));
                (target.map(|n| n.id.clone()), None, loc)
            }
            Predicate::Talk { npc } => (Some(npc.clone()), None, npc_loc(npc)),
            Predicate::Deliver { item, npc } => {
                let loc = if world.has_item(item) {
                    npc_loc(npc)
                } else {
                    world.item_location(item).map(str::to_string).or_else(|| npc_loc(npc))
                };
                (Some(npc.clone()), Some(item.clone()), loc)
            }
            Predicate::Pickup { item } | Predicate::Use { item } => {
                let loc = world.item_location(item).map(str::to_string);
                (None, Some(item.clone()), loc)
            }
            Predicate::Reach { location } => (None, None, Some(location.clone())),
        };
        let next_hop = location
            .as_deref()
            .and_then(|to| spec.path(here, to).into_iter().next());
        let truth = world.ground_truth();
        let counter = truth.iter().find(|t| t.id == step.id).map_or(0, |t| t.counter);
        Objective {
            quest_id: quest.id.clone(),
            quest_description: quest.description.clone(),
            step_id: Some(step.id.clone()),
            step_description: if step.description.is_empty() {
                format!("[{}]", step.predicate.describe())
            } else {
                format!("{} [{}]", step.description, step.predicate.describe())
            },
            kind: step.predicate.kind_name().to_string(),
            npc,
            item,
            location,
            next_hop,
            counter,
            required: step.predicate.required(),
        }
    }

    /// Value of a `$objective.*` reference (name given without the `$`).
    pub fn lookup(&self, reference: &str) -> Option<String> {
        match reference.strip_prefix("objective.")? {
            "npc" => self.npc.clone(),
            "item" => self.item.clone(),
            "location" => self.location.clone(),
            "next_hop" => self.next_hop.clone(),
            "step" => self.step_id.clone(),
            "kind" => Some(self.kind.clone()),
            _ => None,
        }
    }

    /// One-line summary for prompts and reports.
    pub fn describe(&self) -> String {
        match &self.step_id {
            None => format!("{} (quest {} complete)", self.quest_description, self.quest_id),
            Some(id) => format!(
                "{}; current step `{id}`: {} ({}/{})",
                self.quest_description, self.step_description, self.counter, self.required
            ),
        }
    }

    /// Target NPC or location, for the reflection prompt.
    pub fn target(&self) -> String {
        match (&self.npc, &self.location) {
            (Some(n), Some(l)) => format!("{n} at {l}"),
            (Some(n), None) => n.clone(),
            (None, Some(l)) => l.clone(),
            (None, None) => "none".into(),
        }
    }
}
