//! Chat and remote-policy transports.
//!
//! The live transport speaks the OpenAI-compatible `/v1/chat/completions`
//! protocol. Mock and recording transports key canned replies by a hash of
//! the full message sequence, which is sound because every framework call
//! runs at temperature 0: the prompt fully determines the reply.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// All framework calls run deterministically.
pub const GENERATION_TEMPERATURE: f64 = 0.0;

/// Transport calls are retried this many times before falling back.
pub const RETRY_BUDGET: u32 = 2;

pub const API_KEY_ENV: &str = "HARBOR_API_KEY";
pub const BASE_URL_ENV: &str = "HARBOR_BASE_URL";
pub const RLACT_URL_ENV: &str = "HARBOR_RLACT_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "system".into(),
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Failure(String),
    #[error("no fixture entry for prompt hash {0}")]
    MissingFixture(String),
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError>;
}

/// Request sent to a remote reasoning policy endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub system: String,
    pub auctioneer_msg: String,
    pub status_text: String,
    pub priorities: String,
    pub profile_text: String,
}

pub trait PolicyEndpoint: Send + Sync {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError>;
}

pub fn send_with_retries(
    transport: &dyn ChatTransport,
    messages: &[ChatMessage],
    retries: u32,
) -> Result<String, TransportError> {
    let mut last = None;
    for _ in 0..=retries {
        match transport.send(messages, GENERATION_TEMPERATURE) {
            Ok(reply) => return Ok(reply),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| TransportError::Failure("no attempts made".into())))
}

/// Stable key for a message sequence.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    for m in messages {
        hasher.update(m.role.as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.content.as_bytes());
        hasher.update([0x1e]);
    }
    to_hex(&hasher.finalize())
}

/// Stable key for a remote-policy request, distinct from chat keys.
pub fn request_hash(request: &RemoteRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(b"remote:");
    hasher.update(serde_json::to_string(request).unwrap_or_default().as_bytes());
    to_hex(&hasher.finalize())
}

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Live HTTP transport
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

/// OpenAI-compatible chat client bound to one model. Authentication comes
/// from `HARBOR_API_KEY`; the base URL from construction (typically
/// `HARBOR_BASE_URL`).
pub struct HttpChatTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpChatTransport {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpChatTransport {
            client: reqwest::blocking::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
        }
    }
}

impl ChatTransport for HttpChatTransport {
    fn send(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError> {
        let url = format!("{}/v1/chat/completions", self.base_url);
        let body = ChatCompletionRequest {
            model: &self.model,
            temperature,
            messages,
        };
        let mut req = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| TransportError::Failure(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(TransportError::Failure(format!(
                "chat endpoint returned {}",
                resp.status()
            )));
        }
        let parsed: ChatCompletionResponse = resp
            .json()
            .map_err(|e| TransportError::Failure(e.to_string()))?;
        parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| TransportError::Failure("empty completion".into()))
    }
}

/// Remote policy endpoint over HTTP: POSTs the request JSON and reads the
/// reply body as free text.
pub struct HttpPolicyEndpoint {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpPolicyEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpPolicyEndpoint {
            client: reqwest::blocking::Client::new(),
            url: url.into(),
        }
    }
}

impl PolicyEndpoint for HttpPolicyEndpoint {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        let resp = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .map_err(|e| TransportError::Failure(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(TransportError::Failure(format!(
                "policy endpoint returned {}",
                resp.status()
            )));
        }
        resp.text().map_err(|e| TransportError::Failure(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Fixtures: record and replay
// ---------------------------------------------------------------------------

/// On-disk fixture format: prompt hash to canned reply.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    pub entries: BTreeMap<String, String>,
}

impl FixtureFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TransportError::Failure(format!("read fixture: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| TransportError::Failure(format!("parse fixture: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TransportError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| TransportError::Failure(e.to_string()))?;
        if let Some(parent) = path.as_ref().parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| TransportError::Failure(e.to_string()))?;
        }
        std::fs::write(path.as_ref(), text).map_err(|e| TransportError::Failure(e.to_string()))
    }
}

/// Replays canned replies by prompt hash. Strict: a missing entry is an
/// error, never a silent guess.
pub struct MockTransport {
    entries: BTreeMap<String, String>,
}

impl MockTransport {
    pub fn new(fixture: FixtureFile) -> Self {
        MockTransport {
            entries: fixture.entries,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TransportError> {
        Ok(Self::new(FixtureFile::load(path)?))
    }
}

impl ChatTransport for MockTransport {
    fn send(&self, messages: &[ChatMessage], _temperature: f64) -> Result<String, TransportError> {
        let key = prompt_hash(messages);
        self.entries
            .get(&key)
            .cloned()
            .ok_or(TransportError::MissingFixture(key))
    }
}

impl PolicyEndpoint for MockTransport {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        let key = request_hash(request);
        self.entries
            .get(&key)
            .cloned()
            .ok_or(TransportError::MissingFixture(key))
    }
}

/// Shared recording sink usable from concurrent runs.
#[derive(Clone, Default)]
pub struct RecordingSink {
    entries: Arc<Mutex<BTreeMap<String, String>>>,
}

impl RecordingSink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, key: String, reply: String) {
        self.entries.lock().expect("recording sink lock").insert(key, reply);
    }

    pub fn to_fixture(&self) -> FixtureFile {
        FixtureFile {
            entries: self.entries.lock().expect("recording sink lock").clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TransportError> {
        self.to_fixture().save(path)
    }
}

/// Wraps another transport and captures every exchange into a fixture.
pub struct RecordingTransport<T> {
    inner: T,
    sink: RecordingSink,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T, sink: RecordingSink) -> Self {
        RecordingTransport { inner, sink }
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn send(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError> {
        let reply = self.inner.send(messages, temperature)?;
        self.sink.insert(prompt_hash(messages), reply.clone());
        Ok(reply)
    }
}

impl<T: PolicyEndpoint> PolicyEndpoint for RecordingTransport<T> {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        let reply = self.inner.recommend(request)?;
        self.sink.insert(request_hash(request), reply.clone());
        Ok(reply)
    }
}

/// Counts transport calls for the run manifest.
pub struct CountingTransport<T> {
    inner: T,
    calls: Arc<AtomicU64>,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T, calls: Arc<AtomicU64>) -> Self {
        CountingTransport { inner, calls }
    }
}

impl<T: ChatTransport> ChatTransport for CountingTransport<T> {
    fn send(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.send(messages, temperature)
    }
}

impl<T: PolicyEndpoint> PolicyEndpoint for CountingTransport<T> {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.recommend(request)
    }
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn send(&self, messages: &[ChatMessage], temperature: f64) -> Result<String, TransportError> {
        (**self).send(messages, temperature)
    }
}

impl<T: PolicyEndpoint + ?Sized> PolicyEndpoint for Arc<T> {
    fn recommend(&self, request: &RemoteRequest) -> Result<String, TransportError> {
        (**self).recommend(request)
    }
}

/// Resolves a fixture path relative to a base directory.
pub fn resolve_fixture_path(base: &Path, fixture: &Path) -> PathBuf {
    if fixture.is_absolute() {
        fixture.to_path_buf()
    } else {
        base.join(fixture)
    }
}
