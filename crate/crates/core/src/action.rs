//! Action templates and their canonical text form.
//!
//! Every action that crosses a module boundary (simulator, rule engine,
//! decision backend, coverage memory) is a [`ConcreteAction`]. Its text form
//! `Template(slot=value, ...)` is the wire format between a backend and the
//! validator, so parsing is lenient (case-insensitive names, positional
//! arguments, surrounding prose) while rendering is canonical.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while reading action text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("no action found in text")]
    NotFound,
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("template {template} has no slot `{slot}`")]
    UnknownSlot { template: Template, slot: String },
    #[error("template {template} is missing slot `{slot}`")]
    MissingSlot { template: Template, slot: &'static str },
    #[error("invalid value `{value}` for slot `{slot}`")]
    InvalidValue { slot: &'static str, value: String },
    #[error("malformed argument list `{0}`")]
    Malformed(String),
}

/// The six high-level action templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Template {
    Move,
    Talk,
    Attack,
    Use,
    PickUp,
    Explore,
}

/// What kind of entity a slot binds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotDomain {
    Location,
    Npc,
    Item,
    Direction,
    Pathway,
}

/// One named parameter of a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub name: &'static str,
    pub domain: SlotDomain,
    pub optional: bool,
}

const fn slot(name: &'static str, domain: SlotDomain) -> Slot {
    Slot { name, domain, optional: false }
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Move,
        Template::Talk,
        Template::Attack,
        Template::Use,
        Template::PickUp,
        Template::Explore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Move => "Move",
            Template::Talk => "Talk",
            Template::Attack => "Attack",
            Template::Use => "Use",
            Template::PickUp => "PickUp",
            Template::Explore => "Explore",
        }
    }

    /// Fixed slot signature of the template.
    pub fn slots(self) -> &'static [Slot] {
        const MOVE: [Slot; 1] = [slot("to", SlotDomain::Location)];
        const TALK: [Slot; 1] = [slot("to", SlotDomain::Npc)];
        const ATTACK: [Slot; 1] = [slot("target", SlotDomain::Npc)];
        const USE: [Slot; 2] = [
            slot("item", SlotDomain::Item),
            Slot { name: "pathway", domain: SlotDomain::Pathway, optional: true },
        ];
        const PICKUP: [Slot; 1] = [slot("item", SlotDomain::Item)];
        const EXPLORE: [Slot; 1] = [slot("direction", SlotDomain::Direction)];
        match self {
            Template::Move => &MOVE,
            Template::Talk => &TALK,
            Template::Attack => &ATTACK,
            Template::Use => &USE,
            Template::PickUp => &PICKUP,
            Template::Explore => &EXPLORE,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ActionParseError::UnknownTemplate(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] =
        [Direction::North, Direction::East, Direction::South, Direction::West];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::East => "east",
            Direction::South => "south",
            Direction::West => "west",
        }
    }
}

impl FromStr for Direction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or(())
    }
}

/// The two ways an item can be used. Ordering matters: the on-screen key
/// sorts first, which is the order ties are broken in a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pathway {
    ScreenButton,
    InventoryMenu,
}

impl Pathway {
    pub const ALL: [Pathway; 2] = [Pathway::ScreenButton, Pathway::InventoryMenu];

    pub fn as_str(self) -> &'static str {
        match self {
            Pathway::ScreenButton => "screen-button",
            Pathway::InventoryMenu => "inventory-menu",
        }
    }
}

impl FromStr for Pathway {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Pathway::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or(())
    }
}

/// A fully bound template instance.
///
/// The derived `Ord` is the canonical action order used for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConcreteAction {
    Move { to: String },
    Talk { to: String },
    Attack { target: String },
    Use { item: String, pathway: Option<Pathway> },
    PickUp { item: String },
    Explore { direction: Direction },
}

impl ConcreteAction {
    pub fn template(&self) -> Template {
        match self {
            ConcreteAction::Move { .. } => Template::Move,
            ConcreteAction::Talk { .. } => Template::Talk,
            ConcreteAction::Attack { .. } => Template::Attack,
            ConcreteAction::Use { .. } => Template::Use,
            ConcreteAction::PickUp { .. } => Template::PickUp,
            ConcreteAction::Explore { .. } => Template::Explore,
        }
    }

    /// Slot bindings in signature order; unbound optional slots are omitted.
    pub fn bindings(&self) -> Vec<(&'static str, String)> {
        match self {
            ConcreteAction::Move { to } | ConcreteAction::Talk { to } => vec![("to", to.clone())],
            ConcreteAction::Attack { target } => vec![("target", target.clone())],
            ConcreteAction::Use { item, pathway } => {
                let mut out = vec![("item", item.clone())];
                if let Some(p) = pathway {
                    out.push(("pathway", p.as_str().to_string()));
                }
                out
            }
            ConcreteAction::PickUp { item } => vec![("item", item.clone())],
            ConcreteAction::Explore { direction } => {
                vec![("direction", direction.as_str().to_string())]
            }
        }
    }

    pub fn binding(&self, slot: &str) -> Option<String> {
        self.bindings()
            .into_iter()
            .find(|(name, _)| *name == slot)
            .map(|(_, v)| v)
    }

    /// Canonical text form, e.g. `Use(item=orb, pathway=screen-button)`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    fn from_parts(
        template: Template,
        args: BTreeMap<&'static str, String>,
    ) -> Result<Self, ActionParseError> {
        let take = |slot: &'static str| -> Result<String, ActionParseError> {
            args.get(slot)
                .cloned()
                .ok_or(ActionParseError::MissingSlot { template, slot })
        };
        Ok(match template {
            Template::Move => ConcreteAction::Move { to: take("to")? },
            Template::Talk => ConcreteAction::Talk { to: take("to")? },
            Template::Attack => ConcreteAction::Attack { target: take("target")? },
            Template::PickUp => ConcreteAction::PickUp { item: take("item")? },
            Template::Use => {
                let pathway = match args.get("pathway") {
                    None => None,
                    Some(v) => Some(v.parse::<Pathway>().map_err(|_| {
                        ActionParseError::InvalidValue { slot: "pathway", value: v.clone() }
                    })?),
                };
                ConcreteAction::Use { item: take("item")?, pathway }
            }
            Template::Explore => {
                let raw = take("direction")?;
                let direction = raw.parse::<Direction>().map_err(|_| {
                    ActionParseError::InvalidValue { slot: "direction", value: raw.clone() }
                })?;
                ConcreteAction::Explore { direction }
            }
        })
    }

    /// Extracts the first action-shaped substring of `text` and parses it.
    /// Lines are scanned in order, so a backend may wrap its answer in prose.
    pub fn extract(text: &str) -> Result<Self, ActionParseError> {
        let mut first_err = None;
        for caps in call_regex().captures_iter(text) {
            let name = &caps[1];
            let args = &caps[2];
            match parse_call(name, args) {
                Ok((template, bound)) => return ConcreteAction::from_parts(template, bound),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        Err(first_err.unwrap_or(ActionParseError::NotFound))
    }
}

impl fmt::Display for ConcreteAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.template())?;
        for (i, (slot, value)) in self.bindings().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{slot}={value}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for ConcreteAction {
    type Err = ActionParseError;

    /// Strict parse: the whole string must be one action call.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, args) = split_call(s.trim())?;
        let (template, bound) = parse_call(name, args)?;
        ConcreteAction::from_parts(template, bound)
    }
}

impl TryFrom<String> for ConcreteAction {
    type Error = ActionParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ConcreteAction> for String {
    fn from(a: ConcreteAction) -> String {
        a.to_string()
    }
}

fn call_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-Za-z]+)\s*\(([^()\n]*)\)").expect("static regex"))
}

fn split_call(s: &str) -> Result<(&str, &str), ActionParseError> {
    let open = s.find('(').ok_or_else(|| ActionParseError::Malformed(s.to_string()))?;
    if !s.ends_with(')') {
        return Err(ActionParseError::Malformed(s.to_string()));
    }
    Ok((s[..open].trim(), &s[open + 1..s.len() - 1]))
}

/// Splits `slot=value, value, ...` into bindings keyed by the template's
/// slot names. Bare values bind positionally.
pub(crate) fn parse_call(
    name: &str,
    args: &str,
) -> Result<(Template, BTreeMap<&'static str, String>), ActionParseError> {
    let template: Template = name.parse()?;
    let slots = template.slots();
    let mut bound = BTreeMap::new();
    for (position, raw) in args.split(',').map(str::trim).filter(|a| !a.is_empty()).enumerate() {
        let (slot, value) = match raw.split_once('=') {
            Some((k, v)) => {
                let k = k.trim();
                let slot = slots
                    .iter()
                    .find(|s| s.name.eq_ignore_ascii_case(k))
                    .ok_or_else(|| ActionParseError::UnknownSlot {
                        template,
                        slot: k.to_string(),
                    })?;
                (slot.name, v.trim())
            }
            None => {
                let slot = slots
                    .get(position)
                    .ok_or_else(|| ActionParseError::Malformed(args.to_string()))?;
                (slot.name, raw)
            }
        };
        let value = value.trim_matches(|c| c == '"' || c == '\'');
        if value.is_empty() {
            return Err(ActionParseError::InvalidValue { slot, value: value.to_string() });
        }
        bound.insert(slot, value.to_string());
    }
    Ok((template, bound))
}

/// A value constraint inside an [`ActionPattern`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternValue {
    Literal(String),
    /// `*`: any binding.
    Any,
    /// `$name`: resolved against the caller's context (e.g. `$objective.npc`).
    Ref(String),
}

/// A template with optional binding constraints, e.g. `Talk(to=$objective.npc)`
/// or plain `Attack`. Used by fault triggers and the rule store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ActionPattern {
    pub template: Template,
    pub bindings: BTreeMap<&'static str, PatternValue>,
}

impl ActionPattern {
    pub fn template(template: Template) -> Self {
        ActionPattern { template, bindings: BTreeMap::new() }
    }

    /// True when `action` has this template and every constrained slot
    /// matches. `resolve` maps `$refs` to values; an unresolved ref never
    /// matches.
    pub fn matches<F>(&self, action: &ConcreteAction, resolve: F) -> bool
    where
        F: Fn(&str) -> Option<String>,
    {
        if action.template() != self.template {
            return false;
        }
        self.bindings.iter().all(|(slot, want)| {
            let got = action.binding(slot);
            match want {
                PatternValue::Any => true,
                PatternValue::Literal(v) => got.as_deref() == Some(v.as_str()),
                PatternValue::Ref(r) => match (resolve(r), got) {
                    (Some(v), Some(g)) => v == g,
                    _ => false,
                },
            }
        })
    }

    pub fn literal(&self, slot: &str) -> Option<&str> {
        match self.bindings.get(slot) {
            Some(PatternValue::Literal(v)) => Some(v),
            _ => None,
        }
    }

    pub fn refs(&self) -> impl Iterator<Item = &str> {
        self.bindings.values().filter_map(|v| match v {
            PatternValue::Ref(r) => Some(r.as_str()),
            _ => None,
        })
    }
}

impl fmt::Display for ActionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.template.name())?;
        if self.bindings.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        let ordered = self
            .template
            .slots()
            .iter()
            .filter_map(|s| self.bindings.get(s.name).map(|v| (s.name, v)));
        for (i, (slot, value)) in ordered.enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match value {
                PatternValue::Literal(v) => write!(f, "{slot}={v}")?,
                PatternValue::Any => write!(f, "{slot}=*")?,
                PatternValue::Ref(r) => write!(f, "{slot}=${r}")?,
            }
        }
        f.write_str(")")
    }
}

impl FromStr for ActionPattern {
    type Err = ActionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if !s.contains('(') {
            return Ok(ActionPattern::template(s.parse()?));
        }
        let (name, args) = split_call(s)?;
        let (template, raw) = parse_call(name, args)?;
        let mut bindings = BTreeMap::new();
        for (slot, value) in raw {
            let v = if value == "*" {
                PatternValue::Any
            } else if let Some(r) = value.strip_prefix('$') {
                PatternValue::Ref(r.to_string())
            } else {
                match slot {
                    "pathway" if value.parse::<Pathway>().is_err() => {
                        return Err(ActionParseError::InvalidValue { slot, value });
                    }
                    "direction" if value.parse::<Direction>().is_err() => {
                        return Err(ActionParseError::InvalidValue { slot, value });
                    }
                    _ => PatternValue::Literal(value),
                }
            };
            bindings.insert(slot, v);
        }
        Ok(ActionPattern { template, bindings })
    }
}

impl TryFrom<String> for ActionPattern {
    type Error = ActionParseError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ActionPattern> for String {
    fn from(p: ActionPattern) -> String {
        p.to_string()
    }
}
