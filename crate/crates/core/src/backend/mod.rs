//! Decision and reflection backends, their prompts, and output parsing.

pub mod mock;
pub mod parse;
pub mod prompt;
pub mod remote;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::{MockGreedy, MockScripted, Script, ScriptEntry};
pub use parse::{parse_action, parse_action_list, parse_reflection};
pub use prompt::{
    build_decision_prompt, build_reflection_prompt, build_rerank_prompt, DecisionContext,
    ReflectionContext, DEFAULT_TOKEN_BUDGET,
};
pub use remote::RemoteBackend;

pub const DEFAULT_CREDENTIAL_ENV: &str = "QUESTPROBE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("credential environment variable `{0}` is not set")]
    CredentialMissing(String),
    #[error("backend output could not be parsed: {0}")]
    Unparseable(String),
    #[error("action binds `{0}`, which is not available")]
    UnknownBinding(String),
    #[error("action `{0}` is not feasible in this state")]
    Infeasible(String),
    #[error("prompt needs ~{tokens} tokens, over the budget of {budget}")]
    BudgetExceeded { tokens: usize, budget: usize },
    #[error("no scripted reply for prompt fingerprint {0}")]
    NoScript(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptKind {
    Decision,
    Reflection,
    Rerank,
}

/// A rendered prompt: a system message and a user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub kind: PromptKind,
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    /// Rough token estimate: four characters per token.
    pub fn approx_tokens(&self) -> usize {
        (self.system.len() + self.user.len()).div_ceil(4)
    }

    /// SHA-256 of the whitespace-collapsed prompt text, hex encoded.
    pub fn fingerprint(&self) -> String {
        let text = self.text();
        let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
        crate::agent::hex(&Sha256::digest(collapsed.as_bytes()))
    }
}

pub trait Backend: Send {
    fn name(&self) -> &str;
    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    MockGreedy,
    MockScripted,
    Remote,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::MockGreedy => "mock-greedy",
            BackendKind::MockScripted => "mock-scripted",
            BackendKind::Remote => "remote",
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mock-greedy" => Ok(BackendKind::MockGreedy),
            "mock-scripted" => Ok(BackendKind::MockScripted),
            "remote" => Ok(BackendKind::Remote),
            _ => Err(format!("unknown backend `{s}` (mock-greedy, mock-scripted, remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendParams {
    pub kind: BackendKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_env")]
    pub credential_env: String,
    /// Script file for the scripted mock.
    #[serde(default)]
    pub script: Option<std::path::PathBuf>,
}

fn default_model() -> String {
    "gpt-4o".into()
}

fn default_timeout() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

fn default_env() -> String {
    DEFAULT_CREDENTIAL_ENV.into()
}

impl BackendParams {
    pub fn new(kind: BackendKind) -> Self {
        BackendParams {
            kind,
            model: default_model(),
            temperature: 0.0,
            timeout_ms: default_timeout(),
            max_retries: default_retries(),
            endpoint: None,
            credential_env: default_env(),
            script: None,
        }
    }

    /// Builds a fresh backend instance; each run owns its own.
    pub fn build(&self) -> Result<Box<dyn Backend>, BackendError> {
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        Ok(match self.kind {
            BackendKind::MockGreedy => Box::new(MockGreedy::new()),
            BackendKind::MockScripted => {
                let script = match &self.script {
                    Some(path) => Script::load(path)?,
                    None => Script::default(),
                };
                Box::new(MockScripted::new(script).with_fallback(Box::new(MockGreedy::new())))
            }
            BackendKind::Remote => Box::new(RemoteBackend::new(self.clone())?),
        })
    }
}
