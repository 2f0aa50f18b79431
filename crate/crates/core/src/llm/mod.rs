//! Chat-completion gateway: an HTTP provider plus two offline providers
//! (transcript replay and a rule-based translator over the corpus).

mod http;
mod rule_based;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use http::HttpChat;
pub use rule_based::RuleBased;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("environment variable `{var}` holding the API key is not set")]
    AuthMissing { var: String },
    #[error("provider returned HTTP {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("request timed out after {secs} s")]
    TimeoutExceeded { secs: f64 },
    #[error("no transcript for request digest {digest}")]
    ReplayMiss { digest: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

impl LlmError {
    fn is_transient(&self) -> bool {
        match self {
            LlmError::ProviderError { status, .. } => *status == 429 || *status >= 500,
            LlmError::Transport(_) | LlmError::TimeoutExceeded { .. } => true,
            _ => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Replay,
    #[default]
    RuleBased,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::HttpChat => "http_chat",
            ProviderKind::Replay => "replay",
            ProviderKind::RuleBased => "rule_based",
        }
    }
}

impl std::str::FromStr for ProviderKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "http_chat" => Ok(ProviderKind::HttpChat),
            "replay" => Ok(ProviderKind::Replay),
            "rule_based" => Ok(ProviderKind::RuleBased),
            other => Err(LlmError::InvalidConfig(format!("unknown provider kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub max_attempts: u32,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Transcripts served by the replay provider.
    pub transcript_dir: Option<PathBuf>,
    /// Record every exchange here, whatever the provider.
    pub record_dir: Option<PathBuf>,
    pub requests_per_minute: Option<u32>,
    /// First retry delay in milliseconds; doubles per retry.
    pub backoff_ms: u64,
    /// Corpus used by the rule-based provider (bundled corpus if unset).
    pub corpus_root: Option<PathBuf>,
    /// Rule-based provider: apply each entry's `fault.json` to the first
    /// translation it emits.
    pub inject_faults: bool,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::RuleBased,
            base_url: None,
            model_name: None,
            temperature: 0.0,
            max_attempts: 3,
            timeout: 120.0,
            api_key_env: "FTRANS_API_KEY".into(),
            transcript_dir: None,
            record_dir: None,
            requests_per_minute: None,
            backoff_ms: 500,
            corpus_root: None,
            inject_faults: false,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let invalid = |m: &str| Err(LlmError::InvalidConfig(m.to_string()));
        match self.kind {
            ProviderKind::HttpChat if self.base_url.as_deref().is_none_or(str::is_empty) => {
                return invalid("http_chat requires base_url")
            }
            ProviderKind::HttpChat if self.model_name.as_deref().is_none_or(str::is_empty) => {
                return invalid("http_chat requires model_name")
            }
            ProviderKind::Replay if self.transcript_dir.is_none() => {
                return invalid("replay requires transcript_dir")
            }
            _ => {}
        }
        if self.max_attempts == 0 {
            return invalid("max_attempts must be at least 1");
        }
        if !(self.timeout > 0.0) {
            return invalid("timeout must be positive");
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return invalid("temperature must be a finite non-negative number");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Canonical JSON: sorted keys, `\n` line endings.
    pub fn canonical_json(&self) -> String {
        let mut normalized = self.clone();
        for m in &mut normalized.messages {
            m.content = m.content.replace("\r\n", "\n");
        }
        // serde_json's default map is ordered, so keys come out sorted
        let value: Value = serde_json::to_value(&normalized).expect("request serializes");
        value.to_string()
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response_text: String,
    pub latency_secs: f64,
    pub provider_kind: ProviderKind,
    pub request_digest: String,
}

/// Something that turns a request into assistant text.
pub trait Backend: Send + Sync {
    fn respond(&self, request: &ChatRequest, digest: &str) -> Result<String, LlmError>;
}

struct Replay {
    dir: PathBuf,
}

impl Backend for Replay {
    fn respond(&self, _request: &ChatRequest, digest: &str) -> Result<String, LlmError> {
        load_transcript(&self.dir, digest).map(|e| e.response_text)
    }
}

/// Serializes bursts to at most `per_minute` requests per minute.
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_minute: Option<u32>) -> Self {
        Self {
            interval: per_minute
                .filter(|&n| n > 0)
                .map(|n| Duration::from_secs_f64(60.0 / f64::from(n))),
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

pub struct LlmClient {
    config: ProviderConfig,
    backend: Box<dyn Backend>,
    limiter: RateLimiter,
    calls: AtomicUsize,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("config", &self.config)
            .field("calls", &self.calls)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let backend: Box<dyn Backend> = match config.kind {
            ProviderKind::HttpChat => Box::new(HttpChat::new(&config)?),
            ProviderKind::Replay => Box::new(Replay {
                dir: config.transcript_dir.clone().unwrap_or_default(),
            }),
            ProviderKind::RuleBased => Box::new(RuleBased::from_config(&config)?),
        };
        Ok(Self::with_backend(config, backend))
    }

    /// Use a custom backend; `config.kind` is reported in exchanges.
    pub fn with_backend(config: ProviderConfig, backend: Box<dyn Backend>) -> Self {
        Self {
            limiter: RateLimiter::new(config.requests_per_minute),
            config,
            backend,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Requests sent so far, retries not counted.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<ChatExchange, LlmError> {
        match messages {
            [s, u] if s.role == Role::System && u.role == Role::User => {}
            _ => {
                return Err(LlmError::InvalidRequest(
                    "expected exactly one system message followed by one user message".into(),
                ))
            }
        }
        if messages.iter().any(|m| m.content.is_empty()) {
            return Err(LlmError::InvalidRequest("message content is empty".into()));
        }
        let request = ChatRequest {
            messages: messages.to_vec(),
            temperature: self.config.temperature,
        };
        let digest = request.digest();
        self.calls.fetch_add(1, Ordering::SeqCst);

        let start = Instant::now();
        let mut attempt = 1;
        let response_text = loop {
            self.limiter.acquire();
            match self.backend.respond(&request, &digest) {
                Ok(text) => break text,
                Err(e) if e.is_transient() && attempt < self.config.max_attempts => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let exchange = ChatExchange {
            request,
            response_text,
            latency_secs: start.elapsed().as_secs_f64(),
            provider_kind: self.config.kind,
            request_digest: digest,
        };
        if let Some(dir) = &self.config.record_dir {
            record_transcript(&exchange, dir)?;
        }
        Ok(exchange)
    }
}

pub fn transcript_path(dir: &Path, digest: &str) -> PathBuf {
    dir.join(format!("{digest}.json"))
}

/// Write `<digest>.json` atomically; recording the same request again
/// replaces the file.
pub fn record_transcript(exchange: &ChatExchange, dir: &Path) -> Result<PathBuf, LlmError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| LlmError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = transcript_path(dir, &exchange.request_digest);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    let mut text = serde_json::to_string_pretty(exchange).expect("exchange serializes");
    text.push('\n');
    tmp.write_all(text.as_bytes()).map_err(io(tmp.path()))?;
    tmp.persist(&path).map_err(|e| LlmError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    Ok(path)
}

pub fn load_transcript(dir: &Path, digest: &str) -> Result<ChatExchange, LlmError> {
    let path = transcript_path(dir, digest);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(LlmError::ReplayMiss {
                digest: digest.to_string(),
            })
        }
        Err(source) => return Err(LlmError::Io { path, source }),
    };
    serde_json::from_str(&text).map_err(|source| LlmError::Json { path, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            messages: vec![ChatMessage::system("s"), ChatMessage::user(text)],
            temperature: 0.0,
        }
    }

    #[test]
    fn canonical_json_sorts_keys_and_normalizes_newlines() {
        assert_eq!(
            request("a\r\nb").canonical_json(),
            r#"{"messages":[{"content":"s","role":"system"},{"content":"a\nb","role":"user"}],"temperature":0.0}"#
        );
        assert_eq!(request("a\r\nb").digest(), request("a\nb").digest());
        assert_ne!(request("a").digest(), request("b").digest());
    }

    #[test]
    fn config_validation() {
        let mut c = ProviderConfig {
            kind: ProviderKind::HttpChat,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.base_url = Some("http://x".into());
        c.model_name = Some("m".into());
        c.validate().unwrap();
        c.kind = ProviderKind::Replay;
        assert!(c.validate().is_err());
    }

    #[test]
    fn message_contract_is_enforced() {
        struct Echo;
        impl Backend for Echo {
            fn respond(&self, r: &ChatRequest, _: &str) -> Result<String, LlmError> {
                Ok(r.messages[1].content.clone())
            }
        }
        let client = LlmClient::with_backend(ProviderConfig::default(), Box::new(Echo));
        assert!(client.complete(&[ChatMessage::user("u")]).is_err());
        assert!(client.complete(&[ChatMessage::system("s"), ChatMessage::user("")]).is_err());
        let ex = client.complete(&[ChatMessage::system("s"), ChatMessage::user("u")]).unwrap();
        assert_eq!(ex.response_text, "u");
        assert_eq!(client.calls(), 1);
    }

    #[test]
    fn transient_errors_are_retried() {
        struct Flaky(AtomicUsize);
        impl Backend for Flaky {
            fn respond(&self, _: &ChatRequest, _: &str) -> Result<String, LlmError> {
                match self.0.fetch_add(1, Ordering::SeqCst) {
                    0 => Err(LlmError::ProviderError { status: 503, body: String::new() }),
                    _ => Ok("ok".into()),
                }
            }
        }
        let config = ProviderConfig {
            backoff_ms: 1,
            ..Default::default()
        };
        let client = LlmClient::with_backend(config.clone(), Box::new(Flaky(AtomicUsize::new(0))));
        let msgs = [ChatMessage::system("s"), ChatMessage::user("u")];
        assert_eq!(client.complete(&msgs).unwrap().response_text, "ok");

        let once = ProviderConfig { max_attempts: 1, ..config };
        let client = LlmClient::with_backend(once, Box::new(Flaky(AtomicUsize::new(0))));
        assert!(matches!(client.complete(&msgs), Err(LlmError::ProviderError { status: 503, .. })));
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let limiter = RateLimiter::new(Some(1200));
        let start = Instant::now();
        for _ in 0..3 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(95));
    }
}
