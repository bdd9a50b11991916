use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::transcript::{digest_messages, ChatMessage, ChatTranscript};

pub const TOKEN_ENV: &str = "TREENAS_LLM_TOKEN";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("LLM request timed out")]
    Timeout,
    #[error("LLM transport error: {0}")]
    Transport(String),
    #[error("no scripted reply for transcript {0}")]
    NoScript(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Timeout | LlmError::Transport(_))
    }
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait LlmEndpoint: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

impl<T: LlmEndpoint + ?Sized> LlmEndpoint for Arc<T> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

impl<T: LlmEndpoint + ?Sized> LlmEndpoint for &T {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

/// Sends the transcript and appends the reply as an assistant message.
pub fn complete(transcript: &mut ChatTranscript, endpoint: &dyn LlmEndpoint) -> Result<String, LlmError> {
    let reply = endpoint.complete(transcript.messages())?;
    transcript.push_assistant(reply.clone());
    Ok(reply)
}

/// [`complete`] with up to `retries` extra attempts on retryable errors.
pub fn complete_retrying(
    transcript: &mut ChatTranscript,
    endpoint: &dyn LlmEndpoint,
    retries: usize,
) -> Result<String, LlmError> {
    let mut attempt = 0;
    loop {
        match complete(transcript, endpoint) {
            Err(e) if e.is_retryable() && attempt < retries => {
                log::warn!("{e}; retrying");
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// OpenAI-style `/chat/completions` client.
pub struct HttpLlm {
    url: String,
    model: String,
    temperature: f64,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl HttpLlm {
    pub fn new(url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            model: model.into(),
            temperature: 0.7,
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            client,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }
}

impl LlmEndpoint for HttpLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(map_err)?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = resp.json().map_err(map_err)?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("response has no choices".into()))
    }
}

/// Replays replies keyed by transcript digest, falling back to a queue.
#[derive(Default)]
pub struct ScriptedLlm {
    by_digest: BTreeMap<String, String>,
    queue: Mutex<VecDeque<String>>,
    delay: Option<Duration>,
}

impl ScriptedLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(by_digest: BTreeMap<String, String>) -> Self {
        Self {
            by_digest,
            ..Self::default()
        }
    }

    /// Loads a replay file: a JSON object from digest to reply.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Transport(format!("{}: {e}", path.display())))?;
        let map = serde_json::from_str(&text)
            .map_err(|e| LlmError::Transport(format!("{}: {e}", path.display())))?;
        Ok(Self::from_map(map))
    }

    pub fn with_reply(mut self, digest: impl Into<String>, reply: impl Into<String>) -> Self {
        self.by_digest.insert(digest.into(), reply.into());
        self
    }

    /// Queues a reply used, in order, when no digest matches.
    pub fn then(self, reply: impl Into<String>) -> Self {
        self.queue.lock().expect("queue lock").push_back(reply.into());
        self
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("queue lock").len()
    }
}

impl LlmEndpoint for ScriptedLlm {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let digest = digest_messages(messages);
        if let Some(r) = self.by_digest.get(&digest) {
            return Ok(r.clone());
        }
        self.queue
            .lock()
            .expect("queue lock")
            .pop_front()
            .ok_or(LlmError::NoScript(digest))
    }
}

/// Fails with [`LlmError::Timeout`] when the inner endpoint is slower than
/// the deadline. The abandoned call finishes on its own thread.
pub struct WithDeadline {
    inner: Arc<dyn LlmEndpoint>,
    deadline: Duration,
}

impl WithDeadline {
    pub fn new(inner: Arc<dyn LlmEndpoint>, deadline: Duration) -> Self {
        Self { inner, deadline }
    }
}

impl LlmEndpoint for WithDeadline {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let (tx, rx) = mpsc::channel();
        let inner = Arc::clone(&self.inner);
        let messages = messages.to_vec();
        std::thread::spawn(move || {
            let _ = tx.send(inner.complete(&messages));
        });
        rx.recv_timeout(self.deadline).unwrap_or(Err(LlmError::Timeout))
    }
}

/// Records every exchange so a run can be replayed by [`ScriptedLlm`].
pub struct RecordingLlm<E> {
    inner: E,
    log: Mutex<BTreeMap<String, String>>,
}

impl<E: LlmEndpoint> RecordingLlm<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn recorded(&self) -> BTreeMap<String, String> {
        self.log.lock().expect("log lock").clone()
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.recorded()).expect("map serializes");
        std::fs::write(path, text)
    }
}

impl<E: LlmEndpoint> LlmEndpoint for RecordingLlm<E> {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let reply = self.inner.complete(messages)?;
        self.log
            .lock()
            .expect("log lock")
            .insert(digest_messages(messages), reply.clone());
        Ok(reply)
    }
}
