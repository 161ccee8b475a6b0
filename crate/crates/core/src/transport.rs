//! LLM transports.
//!
//! A transport turns a [`PromptText`] into raw response text. The pipeline is
//! written against [`LlmTransport`]; the implementations here are a live
//! OpenAI-compatible chat endpoint, a directory of recorded fixtures keyed by
//! prompt hash, a recorder that fills such a directory, and a scripted
//! transport for tests.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptText;
use crate::stage::StageKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request failed: {message}")]
    Request { message: String, retryable: bool },
    #[error("no recorded response for prompt hash {hash} in {dir}")]
    FixtureMiss { hash: String, dir: PathBuf },
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: Box<TransportError> },
    #[error("transport is not configured: {0}")]
    NotConfigured(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Request { retryable: true, .. })
    }
}

pub trait LlmTransport {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError>;
}

impl<T: LlmTransport + ?Sized> LlmTransport for &mut T {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        (**self).send(prompt)
    }
}

impl<T: LlmTransport + ?Sized> LlmTransport for Box<T> {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        (**self).send(prompt)
    }
}

/// Attempts and exponential backoff for retryable transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Sends `prompt`, retrying retryable failures with exponential backoff.
/// Empty responses count as retryable failures.
pub fn send_with_retry<T: LlmTransport + ?Sized>(
    transport: &mut T,
    prompt: &PromptText,
    policy: RetryPolicy,
) -> Result<String, TransportError> {
    let attempts = policy.attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = transport.send(prompt).and_then(|text| {
            if text.trim().is_empty() {
                Err(TransportError::Request {
                    message: "empty response".into(),
                    retryable: true,
                })
            } else {
                Ok(text)
            }
        });
        match result {
            Ok(text) => return Ok(text),
            Err(err) if err.is_retryable() && attempt < attempts => {
                log::warn!("attempt {attempt}/{attempts} failed: {err}; retrying");
                thread::sleep(policy.delay(attempt));
            }
            Err(err) if err.is_retryable() => {
                return Err(TransportError::Exhausted {
                    attempts: attempt,
                    last: Box::new(err),
                })
            }
            Err(err) => return Err(err),
        }
    }
}

/// Replays responses stored as `<sha256 of prompt body>.txt`.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    dir: PathBuf,
}

impl FixtureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, TransportError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(TransportError::NotConfigured(format!(
                "fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }

    pub fn path_for(&self, prompt: &PromptText) -> PathBuf {
        fixture_path(&self.dir, &prompt.hash())
    }
}

pub fn fixture_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("{hash}.txt"))
}

impl LlmTransport for FixtureStore {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        let path = self.path_for(prompt);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(err) if err.kind() == std::io::ErrorKind::NotFound => Err(TransportError::FixtureMiss {
                hash: prompt.hash(),
                dir: self.dir.clone(),
            }),
            Err(err) => Err(TransportError::Request {
                message: format!("reading {}: {err}", path.display()),
                retryable: false,
            }),
        }
    }
}

/// Forwards to `inner` and stores every response in a fixture directory.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: LlmTransport> LlmTransport for RecordingTransport<T> {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        let text = self.inner.send(prompt)?;
        let io = |err: std::io::Error| TransportError::Request {
            message: format!("recording fixture: {err}"),
            retryable: false,
        };
        fs::create_dir_all(&self.dir).map_err(io)?;
        fs::write(fixture_path(&self.dir, &prompt.hash()), &text).map_err(io)?;
        Ok(text)
    }
}

/// Serves canned responses per stage, in order. Used by tests and by the
/// fixture recorder; every call is logged.
#[derive(Debug, Default, Clone)]
pub struct ScriptedTransport {
    queues: BTreeMap<StageKind, VecDeque<String>>,
    repeat: BTreeMap<StageKind, String>,
    calls: Vec<(StageKind, String)>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues one response for `kind`.
    pub fn push(mut self, kind: StageKind, text: impl Into<String>) -> Self {
        self.queues.entry(kind).or_default().push_back(text.into());
        self
    }

    /// Serves `text` for `kind` whenever its queue is empty.
    pub fn always(mut self, kind: StageKind, text: impl Into<String>) -> Self {
        self.repeat.insert(kind, text.into());
        self
    }

    /// `(stage, prompt body)` for every call so far.
    pub fn calls(&self) -> &[(StageKind, String)] {
        &self.calls
    }

    pub fn stages_called(&self) -> Vec<StageKind> {
        self.calls.iter().map(|(k, _)| *k).collect()
    }
}

impl LlmTransport for ScriptedTransport {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        self.calls.push((prompt.stage_kind, prompt.body.clone()));
        if let Some(text) = self.queues.get_mut(&prompt.stage_kind).and_then(VecDeque::pop_front) {
            return Ok(text);
        }
        self.repeat
            .get(&prompt.stage_kind)
            .cloned()
            .ok_or_else(|| TransportError::Request {
                message: format!("no scripted response for {}", prompt.stage_kind),
                retryable: false,
            })
    }
}

/// Settings for a live chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f32,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            api_key_env: "SCAFFOLDER_API_KEY".into(),
            timeout_secs: 180,
        }
    }
}

pub struct LiveTransport {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl LiveTransport {
    pub fn from_env(config: LiveConfig) -> Result<Self, TransportError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            TransportError::NotConfigured(format!("environment variable {} is not set", config.api_key_env))
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::NotConfigured(e.to_string()))?;
        Ok(Self { config, api_key, client })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl LlmTransport for LiveTransport {
    fn send(&mut self, prompt: &PromptText) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt.body }],
        });
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| TransportError::Request {
                message: e.to_string(),
                retryable: true,
            })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(TransportError::Request {
                message: format!("{status}: {text}"),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let parsed: ChatResponse = response.json().map_err(|e| TransportError::Request {
            message: format!("malformed response body: {e}"),
            retryable: true,
        })?;
        Ok(parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}
