//! Completion backends: an HTTP chat-completions client and a scripted mock.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::Prompt;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const API_KEY_ENV: &str = "TEXTANCHOR_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider refused the request: {0}")]
    Refusal(String),
    #[error("mock script has no unused entry for prompt key {key}")]
    MockScriptExhausted { key: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider configuration error: {0}")]
    Config(String),
}

pub trait Provider: Send + Sync {
    /// Returns the raw model text. Validation is the caller's job.
    fn complete(&self, prompt: &Prompt) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    pub mock_mode: bool,
    pub mock_script: Option<PathBuf>,
    /// Never serialized; read from the environment when absent.
    #[serde(skip)]
    pub api_key: Option<String>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(serde::de::Error::custom("timeout must be a non-negative number of seconds"));
        }
        Ok(Duration::from_secs_f64(v))
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: DEFAULT_ENDPOINT.to_owned(),
            model: DEFAULT_MODEL.to_owned(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            mock_mode: false,
            mock_script: None,
            api_key: None,
        }
    }
}

impl ProviderConfig {
    pub fn mock(script: impl Into<PathBuf>) -> Self {
        ProviderConfig { mock_mode: true, mock_script: Some(script.into()), ..Default::default() }
    }

    /// Builds the configured backend. Mock mode never touches the network.
    pub fn build(&self) -> Result<Box<dyn Provider>, ProviderError> {
        if self.mock_mode {
            let path = self
                .mock_script
                .as_ref()
                .ok_or_else(|| ProviderError::Config("mock_mode requires mock_script".into()))?;
            return Ok(Box::new(MockProvider::from_file(path)?));
        }
        Ok(Box::new(HttpProvider::new(self.clone())?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    /// A prompt key (see [`Prompt::key`]) or `"*"` for any prompt.
    #[serde(rename = "match")]
    pub matcher: String,
    pub response: String,
}

impl MockEntry {
    pub fn any(response: impl Into<String>) -> Self {
        MockEntry { matcher: "*".into(), response: response.into() }
    }

    pub fn keyed(key: impl Into<String>, response: impl Into<String>) -> Self {
        MockEntry { matcher: key.into(), response: response.into() }
    }
}

/// Replays scripted responses. Each entry is used at most once, first match wins.
#[derive(Debug, Default)]
pub struct MockProvider {
    state: Mutex<MockState>,
}

#[derive(Debug, Default)]
struct MockState {
    entries: Vec<(MockEntry, bool)>,
    seen: Vec<Prompt>,
}

impl MockProvider {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        MockProvider {
            state: Mutex::new(MockState { entries: entries.into_iter().map(|e| (e, false)).collect(), seen: Vec::new() }),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let entries: Vec<MockEntry> =
            serde_json::from_str(json).map_err(|e| ProviderError::Config(format!("bad mock script: {e}")))?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Prompts received so far, in order.
    pub fn prompts(&self) -> Vec<Prompt> {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).seen.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap_or_else(|p| p.into_inner()).entries.iter().filter(|(_, used)| !used).count()
    }
}

impl Provider for MockProvider {
    fn complete(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let key = prompt.key();
        let mut state = self.state.lock().unwrap_or_else(|p| p.into_inner());
        state.seen.push(prompt.clone());
        let slot = state.entries.iter_mut().find(|(e, used)| !*used && (e.matcher == "*" || e.matcher == key));
        match slot {
            Some((entry, used)) => {
                *used = true;
                Ok(entry.response.clone())
            }
            None => Err(ProviderError::MockScriptExhausted { key }),
        }
    }
}

/// OpenAI-compatible chat completions client.
#[derive(Debug)]
pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(mut config: ProviderConfig) -> Result<Self, ProviderError> {
        if config.api_key.is_none() {
            config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpProvider { config, client })
    }

    fn body(&self, prompt: &Prompt) -> Value {
        json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompt.system_text},
                {"role": "user", "content": prompt.render_user_message()},
            ],
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(ProviderError::Timeout { attempts: 1 })
            } else {
                Attempt::Retry(ProviderError::Transport(e.to_string()))
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retry(ProviderError::Timeout { attempts: 1 })
            } else {
                Attempt::Retry(ProviderError::Transport(e.to_string()))
            }
        })?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(ProviderError::Transport(format!("HTTP {status}"))));
        }
        if status.is_client_error() {
            return Err(Attempt::Fatal(ProviderError::Refusal(format!("HTTP {status}: {text}"))));
        }
        extract_content(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Retry(ProviderError),
    Fatal(ProviderError),
}

/// Pulls the assistant message out of a chat-completions envelope. A body that
/// is not a recognizable envelope is returned unchanged so the schema
/// validator can reject it with a proper position.
fn extract_content(body: &str) -> Result<String, ProviderError> {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return Ok(body.to_owned());
    };
    let Some(message) = v.pointer("/choices/0/message") else {
        return Ok(body.to_owned());
    };
    if let Some(refusal) = message.get("refusal").and_then(Value::as_str) {
        return Err(ProviderError::Refusal(refusal.to_owned()));
    }
    if v.pointer("/choices/0/finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(ProviderError::Refusal("content filter".into()));
    }
    match message.get("content").and_then(Value::as_str) {
        Some(content) => Ok(content.to_owned()),
        None => Ok(body.to_owned()),
    }
}

impl Provider for HttpProvider {
    fn complete(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let body = self.body(prompt);
        let attempts = self.config.max_retries + 1;
        let mut last = ProviderError::Transport("no attempt made".into());
        for n in 1..=attempts {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => {
                    log::warn!("provider attempt {n}/{attempts} failed: {e}");
                    last = e;
                }
            }
        }
        Err(match last {
            ProviderError::Timeout { .. } => ProviderError::Timeout { attempts },
            other => other,
        })
    }
}
