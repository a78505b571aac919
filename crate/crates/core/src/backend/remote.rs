//! Chat-completion client. This is the only module that touches the network.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendError, BackendParams, Prompt};

pub struct RemoteBackend {
    params: BackendParams,
    endpoint: String,
    credential: String,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    /// Fails with `CredentialMissing` before any network activity when the
    /// configured environment variable is unset or empty.
    pub fn new(params: BackendParams) -> Result<Self, BackendError> {
        let credential = std::env::var(&params.credential_env)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .ok_or_else(|| BackendError::CredentialMissing(params.credential_env.clone()))?;
        let endpoint = params
            .endpoint
            .clone()
            .filter(|e| !e.trim().is_empty())
            .ok_or_else(|| BackendError::Config("remote backend needs an endpoint".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(params.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            params,
            endpoint: endpoint.trim_end_matches('/').to_string(),
            credential,
            client,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint)
    }

    fn body(&self, prompt: &Prompt) -> Value {
        json!({
            "model": self.params.model,
            "temperature": self.params.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let resp = self
            .client
            .post(self.url())
            .bearer_auth(&self.credential)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retry(BackendError::Timeout)
                } else {
                    Attempt::Retry(BackendError::Transport(e.to_string()))
                }
            })?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(BackendError::Transport(format!("server returned {status}"))));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Transport(format!("server returned {status}"))));
        }
        let value: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(BackendError::Timeout)
            } else {
                Attempt::Fatal(BackendError::Unparseable(e.to_string()))
            }
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Attempt::Fatal(BackendError::Unparseable("response has no message content".into())))
    }
}

enum Attempt {
    Retry(BackendError),
    Fatal(BackendError),
}

impl Backend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&mut self, prompt: &Prompt) -> Result<String, BackendError> {
        let body = self.body(prompt);
        let mut last = BackendError::Transport("no attempt made".into());
        for _ in 0..=self.params.max_retries {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(last)
    }
}
