use std::fmt;

use serde::{Deserialize, Serialize};

use crate::action::ConcreteAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BugType {
    Logic,
    Hang,
    Interaction,
}

impl BugType {
    pub fn as_str(self) -> &'static str {
        match self {
            BugType::Logic => "logic",
            BugType::Hang => "hang",
            BugType::Interaction => "interaction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logic" => Some(BugType::Logic),
            "hang" => Some(BugType::Hang),
            "interaction" => Some(BugType::Interaction),
            _ => None,
        }
    }
}

impl fmt::Display for BugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suspicion {
    pub bug_type: BugType,
    pub evidence: Vec<String>,
}

/// Result of a reflection: a revised plan or a bug suspicion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReflectionOutcome {
    RevisedPlan { plan: Vec<ConcreteAction>, analysis: String },
    BugSuspected { suspicion: Suspicion, analysis: String },
}

impl ReflectionOutcome {
    /// `None` for an empty plan.
    pub fn plan(plan: Vec<ConcreteAction>, analysis: impl Into<String>) -> Option<Self> {
        (!plan.is_empty()).then(|| ReflectionOutcome::RevisedPlan { plan, analysis: analysis.into() })
    }

    /// `None` without evidence. A blank analysis is replaced by a summary of
    /// the evidence so reports never carry an empty section.
    pub fn bug(bug_type: BugType, evidence: Vec<String>, analysis: impl Into<String>) -> Option<Self> {
        if evidence.is_empty() {
            return None;
        }
        let mut analysis = analysis.into();
        if analysis.trim().is_empty() {
            analysis = format!("Suspected {bug_type} bug: {}", evidence.join("; "));
        }
        Some(ReflectionOutcome::BugSuspected {
            suspicion: Suspicion { bug_type, evidence },
            analysis,
        })
    }

    pub fn is_bug(&self) -> bool {
        matches!(self, ReflectionOutcome::BugSuspected { .. })
    }

    pub fn analysis(&self) -> &str {
        match self {
            ReflectionOutcome::RevisedPlan { analysis, .. }
            | ReflectionOutcome::BugSuspected { analysis, .. } => analysis,
        }
    }
}
