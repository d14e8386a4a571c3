//! Provider-agnostic chat-completion client.
//!
//! Speaks the OpenAI-compatible `POST {base_url}/chat/completions` shape and
//! runs in one of three modes:
//!
//! - `live`: HTTP only;
//! - `record`: HTTP, then the completion is stored under the request digest;
//! - `replay`: digest lookup in a [`FixtureStore`], never touching the network.
//!
//! Transport attempts are capped at [`MAX_ATTEMPTS`] per call. 429s, 5xx and
//! connection failures are retried with exponential backoff plus jitter; 401
//! and 403 fail at once. The bearer token is held in [`ApiKey`], whose `Debug`
//! and `Display` are redacted, and is never written to fixtures or logs.

pub mod fixtures;
mod http;
mod limiter;
pub mod template;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{debug, warn};

pub use fixtures::FixtureStore;
pub use http::UreqTransport;
pub use limiter::RateLimiter;
pub use template::{format_slides, PromptTemplate, TemplateError, TemplateId};

pub const API_KEY_ENV: &str = "MICROFORGE_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_MAX_TOKENS: u32 = 4096;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);
pub const MAX_ATTEMPTS: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider rejected the credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited by provider after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider error HTTP {status} after {attempts} attempts: {detail}")]
    Provider { status: u16, attempts: u32, detail: String },
    #[error("no recorded completion for request digest {digest}")]
    MockMiss { digest: String },
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("network failure after {attempts} attempts: {detail}")]
    Network { attempts: u32, detail: String },
    #[error("gateway not configured: {0}")]
    NotConfigured(String),
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("unreadable provider response: {0}")]
    BadResponse(String),
    #[error("fixture store: {0}")]
    Fixture(String),
}

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn single_user(model_id: &str, content: String, temperature: f64, max_tokens: u32) -> Self {
        ChatRequest {
            model_id: model_id.to_string(),
            messages: vec![ChatMessage {
                role: Role::User,
                content,
            }],
            temperature,
            max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        match self.messages.last() {
            None => bad("messages must not be empty"),
            Some(last) if last.role != Role::User => bad("the last message must come from the user"),
            _ if !(0.0..=2.0).contains(&self.temperature) => bad("temperature must lie in [0, 2]"),
            _ if self.max_tokens == 0 => bad("max_tokens must be positive"),
            _ if self.model_id.trim().is_empty() => bad("model_id must not be empty"),
            _ => Ok(()),
        }
    }

    /// SHA-256 (hex) of the model id and messages, serialized with sorted
    /// keys and no insignificant whitespace. Message content is hashed
    /// verbatim.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "messages": self.messages,
            "model": self.model_id,
        });
        sha256_hex(&serde_json::to_string(&canonical).expect("json value serializes"))
    }

    /// OpenAI-compatible request body.
    pub fn wire_body(&self) -> String {
        serde_json::json!({
            "model": self.model_id,
            "messages": self.messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
        .to_string()
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

// ---------------------------------------------------------------------------
// Credentials and transport
// ---------------------------------------------------------------------------

#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(raw: impl Into<String>) -> Self {
        ApiKey(raw.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(ApiKey)
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Connect(String),
}

/// One HTTP POST. Implemented over `ureq` in production and by scripted fakes
/// in tests.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &str) -> Result<HttpReply, TransportError>;
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: MAX_ATTEMPTS,
            base_delay: Duration::from_secs(1),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry `n` (1-based): `base * 2^(n-1)` stretched by up to
    /// half again when jitter is on. The stretch stays below the doubling, so
    /// successive delays never shrink.
    pub fn delay_before_retry(&self, n: u32) -> Duration {
        let nominal = self.base_delay.saturating_mul(1u32 << (n.saturating_sub(1)).min(20));
        if self.jitter {
            let stretch: f64 = rand::rng().random_range(0.0..0.5);
            nominal.mul_f64(1.0 + stretch)
        } else {
            nominal
        }
    }
}

#[derive(Clone, Debug)]
pub struct GatewayConfig {
    pub base_url: String,
    pub model_id: String,
    pub api_key: Option<ApiKey>,
    pub timeout: Duration,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            base_url: DEFAULT_BASE_URL.to_string(),
            model_id: DEFAULT_MODEL.to_string(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
            requests_per_minute: 60,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub completions: usize,
    pub network_attempts: usize,
    pub fixture_hits: usize,
    pub recorded: usize,
}

#[derive(Default)]
struct Counters {
    completions: AtomicUsize,
    network_attempts: AtomicUsize,
    fixture_hits: AtomicUsize,
    recorded: AtomicUsize,
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    mode: GatewayMode,
    config: GatewayConfig,
    transport: Option<Arc<dyn Transport>>,
    fixtures: Option<Mutex<FixtureStore>>,
    limiter: RateLimiter,
    sleeper: Sleeper,
    counters: Counters,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("base_url", &self.config.base_url)
            .field("model_id", &self.config.model_id)
            .field("api_key", &self.config.api_key)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Builds a gateway. Live and record modes need a base URL and an API
    /// key; record and replay modes need a fixture store. Only live and record
    /// modes get an HTTP transport.
    pub fn new(mode: GatewayMode, config: GatewayConfig, fixtures: Option<FixtureStore>) -> Result<Self, GatewayError> {
        let networked = matches!(mode, GatewayMode::Live | GatewayMode::Record);
        if networked {
            if config.base_url.trim().is_empty() {
                return Err(GatewayError::NotConfigured("base_url is empty".into()));
            }
            if config.api_key.is_none() {
                return Err(GatewayError::NotConfigured(format!("{API_KEY_ENV} is not set")));
            }
        }
        if mode != GatewayMode::Live && fixtures.is_none() {
            return Err(GatewayError::NotConfigured(format!(
                "{mode:?} mode needs a fixture store"
            )));
        }
        let transport: Option<Arc<dyn Transport>> =
            networked.then(|| Arc::new(UreqTransport::new(config.timeout)) as Arc<dyn Transport>);
        Ok(Gateway {
            mode,
            limiter: RateLimiter::per_minute(config.requests_per_minute),
            config,
            transport,
            fixtures: fixtures.map(Mutex::new),
            sleeper: Box::new(std::thread::sleep),
            counters: Counters::default(),
        })
    }

    /// Replay-only gateway over an in-memory or file-backed store.
    pub fn replay(model_id: &str, fixtures: FixtureStore) -> Self {
        let config = GatewayConfig {
            model_id: model_id.to_string(),
            ..GatewayConfig::default()
        };
        Gateway::new(GatewayMode::Replay, config, Some(fixtures)).expect("replay gateway has fixtures")
    }

    /// Swaps the HTTP transport. Has no effect on replay behaviour.
    pub fn with_transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    pub fn stats(&self) -> GatewayStats {
        let c = &self.counters;
        GatewayStats {
            completions: c.completions.load(Ordering::Relaxed),
            network_attempts: c.network_attempts.load(Ordering::Relaxed),
            fixture_hits: c.fixture_hits.load(Ordering::Relaxed),
            recorded: c.recorded.load(Ordering::Relaxed),
        }
    }

    /// Snapshot of the fixture store, if the gateway has one.
    pub fn fixtures(&self) -> Option<FixtureStore> {
        self.fixtures
            .as_ref()
            .map(|f| f.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }

    /// Returns the text of the first choice for `req`.
    pub fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        self.counters.completions.fetch_add(1, Ordering::Relaxed);
        let digest = req.digest();
        match self.mode {
            GatewayMode::Replay => {
                let store = self.store()?.lock().unwrap_or_else(|e| e.into_inner());
                match store.get(&digest) {
                    Some(text) => {
                        self.counters.fixture_hits.fetch_add(1, Ordering::Relaxed);
                        debug!(%digest, "replayed completion");
                        Ok(text.to_string())
                    }
                    None => Err(GatewayError::MockMiss { digest }),
                }
            }
            GatewayMode::Live => self.dispatch(req, &digest),
            GatewayMode::Record => {
                let text = self.dispatch(req, &digest)?;
                let mut store = self.store()?.lock().unwrap_or_else(|e| e.into_inner());
                store
                    .insert(digest.clone(), text.clone())
                    .map_err(|e| GatewayError::Fixture(e.to_string()))?;
                self.counters.recorded.fetch_add(1, Ordering::Relaxed);
                debug!(%digest, "recorded completion");
                Ok(text)
            }
        }
    }

    fn store(&self) -> Result<&Mutex<FixtureStore>, GatewayError> {
        self.fixtures
            .as_ref()
            .ok_or_else(|| GatewayError::NotConfigured("no fixture store".into()))
    }

    fn chat_url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn dispatch(&self, req: &ChatRequest, digest: &str) -> Result<String, GatewayError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| GatewayError::NotConfigured("no HTTP transport".into()))?;
        let key = self
            .config
            .api_key
            .as_ref()
            .ok_or_else(|| GatewayError::NotConfigured(format!("{API_KEY_ENV} is not set")))?;
        let url = self.chat_url();
        let body = req.wire_body();
        let policy = &self.config.retry;

        let mut last_error = GatewayError::NotConfigured("retry budget is zero".into());
        for attempt in 1..=policy.max_attempts {
            self.limiter.acquire();
            self.counters.network_attempts.fetch_add(1, Ordering::Relaxed);
            debug!(%digest, attempt, model = %req.model_id, "dispatching chat completion");
            last_error = match transport.post_json(&url, key.expose(), &body) {
                Err(TransportError::Timeout) => return Err(GatewayError::Timeout(self.config.timeout)),
                Err(TransportError::Connect(detail)) => GatewayError::Network {
                    attempts: attempt,
                    detail,
                },
                Ok(reply) => match reply.status {
                    200..=299 => return first_choice(&reply.body),
                    401 | 403 => return Err(GatewayError::Auth { status: reply.status }),
                    429 => GatewayError::RateLimited { attempts: attempt },
                    500..=599 => GatewayError::Provider {
                        status: reply.status,
                        attempts: attempt,
                        detail: snippet(&reply.body),
                    },
                    status => {
                        return Err(GatewayError::Provider {
                            status,
                            attempts: attempt,
                            detail: snippet(&reply.body),
                        })
                    }
                },
            };
            if attempt < policy.max_attempts {
                let delay = policy.delay_before_retry(attempt);
                warn!(%digest, attempt, ?delay, error = %last_error, "retrying chat completion");
                (self.sleeper)(delay);
            }
        }
        Err(last_error)
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

fn first_choice(body: &str) -> Result<String, GatewayError> {
    let parsed: WireResponse = serde_json::from_str(body).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| GatewayError::BadResponse("response has no choices[0].message.content".into()))
}
