//! Metadata-driven selection and discretization of raw observations.
//!
//! A [`GameMetadata`] document lists the units worth keeping, where each one
//! lives in the [`RawState`], and how it is reduced to a symbol. The result
//! is an [`AbstractState`] whose canonical key is what the agent, coverage
//! memory, and reachability oracle all use as a state identity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::RawState;

pub const METADATA_SCHEMA: &str = "metadata-v1";
pub const DEFAULT_MAX_KEY_LEN: usize = 512;
/// Canonical key of a state with no features.
pub const EMPTY_KEY: &str = "<empty>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerceptionError {
    #[error("metadata unit `{unit}`: {reason}")]
    MetadataInvalid { unit: String, reason: String },
    #[error("raw state does not provide `{0}`")]
    SchemaMismatch(String),
    #[error("canonical key is {len} characters, over the budget of {max}")]
    KeyBudget { len: usize, max: usize },
    #[error("malformed canonical key: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKind {
    Continuous,
    Categorical,
    Set,
}

/// Every path a metadata unit may read, with the kind of value found there.
pub const RAW_SCHEMA: &[(&str, UnitKind)] = &[
    ("tick", UnitKind::Continuous),
    ("player.location", UnitKind::Categorical),
    ("player.coords", UnitKind::Categorical),
    ("player.hp", UnitKind::Continuous),
    ("player.mana", UnitKind::Continuous),
    ("player.status_effects", UnitKind::Set),
    ("inventory", UnitKind::Set),
    ("nearby_npcs", UnitKind::Set),
    ("nearby_objects", UnitKind::Set),
    ("quest.id", UnitKind::Categorical),
    ("quest.active_step", UnitKind::Categorical),
    ("quest.active_counter", UnitKind::Continuous),
    ("clock_phase", UnitKind::Continuous),
    ("ambient_noise", UnitKind::Set),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Scheme {
    /// `labels[i]` covers `[thresholds[i-1], thresholds[i])`; the top bucket is closed.
    Buckets { thresholds: Vec<f64>, labels: Vec<String> },
    Passthrough,
    DayNight { cycle: u64, day_window: u64 },
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSpec {
    pub name: String,
    pub source: String,
    pub kind: UnitKind,
    pub scheme: Scheme,
    #[serde(default = "yes")]
    pub relevant: bool,
    /// Marks the unit carrying the current quest objective.
    #[serde(default)]
    pub objective: bool,
}

impl UnitSpec {
    pub fn kept(&self) -> bool {
        self.relevant && self.scheme != Scheme::Drop
    }
}

fn yes() -> bool {
    true
}

fn default_max_key_len() -> usize {
    DEFAULT_MAX_KEY_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameMetadata {
    pub schema: String,
    pub units: Vec<UnitSpec>,
    #[serde(default = "default_max_key_len")]
    pub max_key_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Symbol(String),
    Set(BTreeSet<String>),
}

/// Selected, discretized features in unit order, plus their canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbstractState {
    pub features: Vec<(String, FeatureValue)>,
    pub key: String,
}

enum RawValue {
    Num(f64),
    Text(String),
    Set(BTreeSet<String>),
}

fn resolve(raw: &RawState, path: &str) -> Option<RawValue> {
    use RawValue::*;
    let set = |it: &mut dyn Iterator<Item = String>| Set(it.collect());
    Some(match path {
        "tick" => Num(raw.tick as f64),
        "player.location" => Text(raw.player.location.clone()),
        "player.coords" => {
            let [x, y, z] = raw.player.coords;
            Text(format!("{x},{y},{z}"))
        }
        "player.hp" => Num(raw.player.hp),
        "player.mana" => Num(raw.player.mana),
        "player.status_effects" => Set(raw.player.status_effects.clone()),
        "inventory" => set(&mut raw.inventory.iter().cloned()),
        "nearby_npcs" => set(&mut raw.nearby_npcs.iter().map(|n| n.id.clone())),
        "nearby_objects" => set(&mut raw.nearby_objects.iter().cloned()),
        "quest.id" => Text(raw.quest.id.clone()),
        "quest.active_step" => Text(raw.quest.active_step.clone().unwrap_or_else(|| "complete".into())),
        "quest.active_counter" => Num(raw.active_counter() as f64),
        "clock_phase" => Num(raw.clock_phase as f64),
        "ambient_noise" => set(&mut raw.ambient_noise.iter().map(|b| b.name.clone())),
        _ => return None,
    })
}

/// Label for `value` under closed-below buckets: a value equal to a
/// threshold falls in the bucket above it.
pub fn bucket_continuous<'a>(value: f64, thresholds: &[f64], labels: &'a [String]) -> &'a str {
    let idx = thresholds.iter().take_while(|t| value >= **t).count();
    &labels[idx]
}

fn render_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

impl GameMetadata {
    pub fn from_json(text: &str) -> Result<Self, PerceptionError> {
        let meta: GameMetadata = serde_json::from_str(text).map_err(|e| {
            PerceptionError::MetadataInvalid { unit: "<document>".into(), reason: e.to_string() }
        })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    pub fn unit(&self, name: &str) -> Option<&UnitSpec> {
        self.units.iter().find(|u| u.name == name)
    }

    /// Name of the unit that carries the quest objective.
    pub fn objective_unit(&self) -> &str {
        &self.units.iter().find(|u| u.objective).expect("validated").name
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let bad = |unit: &str, reason: &str| {
            Err(PerceptionError::MetadataInvalid { unit: unit.into(), reason: reason.into() })
        };
        if self.schema != METADATA_SCHEMA {
            return bad("<document>", &format!("unsupported schema `{}`", self.schema));
        }
        if self.max_key_len == 0 {
            return bad("<document>", "max_key_len must be positive");
        }
        let mut names = BTreeSet::new();
        for u in &self.units {
            if u.name.is_empty() {
                return bad("<unnamed>", "unit name is empty");
            }
            if !names.insert(u.name.as_str()) {
                return bad(&u.name, "duplicate unit name");
            }
            let Some((_, declared)) = RAW_SCHEMA.iter().find(|(p, _)| *p == u.source) else {
                return bad(&u.name, &format!("unknown source path `{}`", u.source));
            };
            if *declared != u.kind {
                return bad(&u.name, &format!("`{}` is {:?}, not {:?}", u.source, declared, u.kind));
            }
            match &u.scheme {
                Scheme::Buckets { thresholds, labels } => {
                    if u.kind != UnitKind::Continuous {
                        return bad(&u.name, "buckets need a continuous unit");
                    }
                    if labels.len() != thresholds.len() + 1 {
                        return bad(&u.name, "bucket labels must number thresholds + 1");
                    }
                    if thresholds.iter().any(|t| !t.is_finite())
                        || thresholds.windows(2).any(|w| w[0] >= w[1])
                    {
                        return bad(&u.name, "thresholds must be finite and strictly ascending");
                    }
                }
                Scheme::DayNight { cycle, day_window } => {
                    if u.kind != UnitKind::Continuous {
                        return bad(&u.name, "day/night needs a continuous unit");
                    }
                    if *cycle == 0 || day_window > cycle {
                        return bad(&u.name, "day window must fit inside a positive cycle");
                    }
                }
                Scheme::Passthrough | Scheme::Drop => {}
            }
        }
        let objectives: Vec<_> = self.units.iter().filter(|u| u.objective).collect();
        match objectives.as_slice() {
            [u] if u.kept() => Ok(()),
            [u] => bad(&u.name, "the objective unit cannot be dropped"),
            [] => bad("<document>", "no unit is marked as the quest objective"),
            _ => bad(&objectives[1].name, "more than one objective unit"),
        }
    }

    pub fn abstract_state(&self, raw: &RawState) -> Result<AbstractState, PerceptionError> {
        let mut features = Vec::new();
        for u in self.units.iter().filter(|u| u.kept()) {
            let value = resolve(raw, &u.source)
                .ok_or_else(|| PerceptionError::SchemaMismatch(u.source.clone()))?;
            let fv = match (&u.scheme, value) {
                (Scheme::Buckets { thresholds, labels }, RawValue::Num(v)) => {
                    FeatureValue::Symbol(bucket_continuous(v, thresholds, labels).to_string())
                }
                (Scheme::DayNight { cycle, day_window }, RawValue::Num(v)) => {
                    let phase = (v.max(0.0) as u64) % cycle;
                    FeatureValue::Symbol(if phase < *day_window { "day" } else { "night" }.into())
                }
                (Scheme::Passthrough, RawValue::Num(v)) => FeatureValue::Symbol(render_number(v)),
                (Scheme::Passthrough, RawValue::Text(t)) => FeatureValue::Symbol(t),
                (Scheme::Passthrough, RawValue::Set(s)) => FeatureValue::Set(s),
                _ => return Err(PerceptionError::SchemaMismatch(u.source.clone())),
            };
            features.push((u.name.clone(), fv));
        }
        let key = encode(&features);
        if key.chars().count() > self.max_key_len {
            return Err(PerceptionError::KeyBudget { len: key.chars().count(), max: self.max_key_len });
        }
        Ok(AbstractState { features, key })
    }
}

impl AbstractState {
    pub fn from_features(features: Vec<(String, FeatureValue)>) -> Self {
        let key = encode(&features);
        AbstractState { features, key }
    }

    pub fn from_key(key: &str) -> Result<Self, PerceptionError> {
        Ok(AbstractState { features: decode(key)?, key: key.to_string() })
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureValue> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Name-to-value view, for rule evaluation.
    pub fn feature_map(&self) -> BTreeMap<&str, &FeatureValue> {
        self.features.iter().map(|(n, v)| (n.as_str(), v)).collect()
    }
}

const SPECIAL: [char; 6] = ['\\', '|', '=', '{', '}', ','];

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        if SPECIAL.contains(&c) {
            out.push('\\');
        }
        out.push(c);
    }
}

/// Canonical text for a feature list: `name=value|name={a,b}`. Sets are
/// rendered sorted, so element order never matters.
pub fn encode(features: &[(String, FeatureValue)]) -> String {
    if features.is_empty() {
        return EMPTY_KEY.to_string();
    }
    let mut out = String::new();
    for (i, (name, value)) in features.iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        escape_into(&mut out, name);
        out.push('=');
        match value {
            FeatureValue::Symbol(s) => escape_into(&mut out, s),
            FeatureValue::Set(items) => {
                out.push('{');
                for (j, item) in items.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    escape_into(&mut out, item);
                }
                out.push('}');
            }
        }
    }
    out
}

/// Inverse of [`encode`].
pub fn decode(key: &str) -> Result<Vec<(String, FeatureValue)>, PerceptionError> {
    if key == EMPTY_KEY {
        return Ok(Vec::new());
    }
    let err = |m: &str| PerceptionError::Decode(m.to_string());
    let mut chars = key.chars().peekable();
    let mut out = Vec::new();
    // Reads an escaped token up to (not including) an unescaped special char.
    let read = |chars: &mut std::iter::Peekable<std::str::Chars>| -> Result<String, PerceptionError> {
        let mut s = String::new();
        while let Some(&c) = chars.peek() {
            if c == '\\' {
                chars.next();
                s.push(chars.next().ok_or_else(|| err("dangling escape"))?);
            } else if SPECIAL.contains(&c) {
                break;
            } else {
                s.push(c);
                chars.next();
            }
        }
        Ok(s)
    };
    loop {
        let name = read(&mut chars)?;
        if chars.next() != Some('=') {
            return Err(err("expected `=` after feature name"));
        }
        let value = if chars.peek() == Some(&'{') {
            chars.next();
            let mut items = BTreeSet::new();
            if chars.peek() == Some(&'}') {
                chars.next();
            } else {
                loop {
                    items.insert(read(&mut chars)?);
                    match chars.next() {
                        Some(',') => continue,
                        Some('}') => break,
                        _ => return Err(err("unterminated set")),
                    }
                }
            }
            FeatureValue::Set(items)
        } else {
            FeatureValue::Symbol(read(&mut chars)?)
        };
        out.push((name, value));
        match chars.next() {
            None => break,
            Some('|') => continue,
            Some(c) => return Err(err(&format!("unexpected `{c}`"))),
        }
    }
    Ok(out)
}

impl std::fmt::Display for AbstractState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        for (name, v) in &self.features {
            let _ = match v {
                FeatureValue::Symbol(x) => writeln!(s, "{name}: {x}"),
                FeatureValue::Set(xs) => {
                    writeln!(s, "{name}: {{{}}}", xs.iter().cloned().collect::<Vec<_>>().join(", "))
                }
            };
        }
        f.write_str(s.trim_end())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    fn unit(name: &str, source: &str, kind: UnitKind, scheme: Scheme) -> UnitSpec {
        UnitSpec { name: name.into(), source: source.into(), kind, scheme, relevant: true, objective: false }
    }

    pub fn hp_scheme() -> Scheme {
        Scheme::Buckets {
            thresholds: vec![0.2, 0.7],
            labels: vec!["Low".into(), "Medium".into(), "High".into()],
        }
    }

    /// Location, hp, clock, quest step (objective), npcs; drops noise and tick.
    pub fn basic() -> GameMetadata {
        let mut step = unit("quest-step", "quest.active_step", UnitKind::Categorical, Scheme::Passthrough);
        step.objective = true;
        GameMetadata {
            schema: METADATA_SCHEMA.into(),
            max_key_len: DEFAULT_MAX_KEY_LEN,
            units: vec![
                unit("tick", "tick", UnitKind::Continuous, Scheme::Drop),
                unit("location", "player.location", UnitKind::Categorical, Scheme::Passthrough),
                unit("hp", "player.hp", UnitKind::Continuous, hp_scheme()),
                unit("clock", "clock_phase", UnitKind::Continuous, Scheme::DayNight { cycle: 100_000, day_window: 60_000 }),
                unit("status", "player.status_effects", UnitKind::Set, Scheme::Passthrough),
                unit("nearby-npcs", "nearby_npcs", UnitKind::Set, Scheme::Passthrough),
                step,
                unit("noise", "ambient_noise", UnitKind::Set, Scheme::Drop),
            ],
        }
    }
}
