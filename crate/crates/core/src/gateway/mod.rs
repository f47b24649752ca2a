//! Chat-completion client for multimodal LLM endpoints.
//!
//! Requests are content-addressed by [`cache_key`]; a hit never touches the
//! network. Transport failures are retried with exponential backoff, refusals
//! and credential rejections are not.

mod cache;
mod mock;
mod transport;

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

pub use cache::ResponseCache;
pub use mock::{image_digest, request_probe, CapturedRequest, MockScript, MockServer, MockTransport, ScriptEntry};
pub use transport::{HttpTransport, Transport, TransportFailure, ENV_KEY, ENV_URL};

use crate::features::fnv1a64;

pub const DEFAULT_MODEL: &str = "gpt-4o-2024-08-06";
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
/// Body-part extraction and environment filtering favour precision.
pub const PRECISE_TEMPERATURE: f64 = 0.2;
/// Paraphrasing favours diversity.
pub const DIVERSE_TEMPERATURE: f64 = 1.0;
pub const MAX_IMAGES_PER_REQUEST: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum ContentPart {
    Text(String),
    /// PNG bytes, sent inline as a base64 data URL.
    Image(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub parts: Vec<ContentPart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    /// Single-shot user message.
    pub fn user(model: impl Into<String>, temperature: f64, parts: Vec<ContentPart>) -> Self {
        ChatRequest {
            model: model.into(),
            messages: vec![ChatMessage { role: "user".into(), parts }],
            temperature,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn image_count(&self) -> usize {
        self.parts().filter(|p| matches!(p, ContentPart::Image(_))).count()
    }

    fn parts(&self) -> impl Iterator<Item = &ContentPart> {
        self.messages.iter().flat_map(|m| m.parts.iter())
    }

    pub fn to_wire(&self) -> Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text(t) => json!({"type": "text", "text": t}),
                        ContentPart::Image(png) => json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:image/png;base64,{}", b64.encode(png))}
                        }),
                    })
                    .collect();
                json!({"role": m.role, "content": content})
            })
            .collect();
        json!({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": messages,
        })
    }
}

/// Deterministic, order-sensitive 64-bit key over the model, temperature,
/// every text part and every image byte.
///
/// Two distinct requests that collide share one cache slot; the later write
/// wins and a warning is logged.
pub fn cache_key(request: &ChatRequest) -> u64 {
    let mut buf = Vec::new();
    let mut field = |tag: u8, bytes: &[u8]| {
        buf.push(tag);
        buf.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        buf.extend_from_slice(bytes);
    };
    field(b'M', request.model.as_bytes());
    field(b'T', &request.temperature.to_bits().to_le_bytes());
    for m in &request.messages {
        field(b'R', m.role.as_bytes());
        for p in &m.parts {
            match p {
                ContentPart::Text(t) => field(b's', t.as_bytes()),
                ContentPart::Image(png) => field(b'i', png),
            }
        }
    }
    fnv1a64(&buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Refusal,
    Malformed,
    TransportError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayResponse {
    pub text: String,
    pub outcome: Outcome,
    /// Network attempts made; 0 on a cache hit.
    pub attempts: u32,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; for tests against the mock.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model: String,
    pub max_concurrency: usize,
    pub max_request_bytes: usize,
    /// Case-insensitive phrases that mark a reply as a refusal.
    pub refusal_phrases: Vec<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model: DEFAULT_MODEL.into(),
            max_concurrency: 4,
            max_request_bytes: 20 * 1024 * 1024,
            refusal_phrases: [
                "i'm sorry",
                "i am sorry",
                "i can't assist",
                "i cannot assist",
                "i can't help",
                "i cannot help",
                "i'm unable to",
                "i am unable to",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("credentials rejected (HTTP {0})")]
    Auth(u16),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Counting semaphore bounding in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct Gateway {
    transport: Box<dyn Transport>,
    cache: ResponseCache,
    config: GatewayConfig,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(transport: Box<dyn Transport>, cache: ResponseCache, config: GatewayConfig) -> Self {
        let limiter = Limiter::new(config.max_concurrency);
        Gateway { transport, cache, config, limiter }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    /// Builds a single-shot request with the configured model.
    pub fn request(&self, temperature: f64, parts: Vec<ContentPart>) -> ChatRequest {
        ChatRequest::user(self.config.model.clone(), temperature, parts)
    }

    /// Drops a cached answer, e.g. after it failed to parse, so the next
    /// call asks the endpoint again.
    pub fn evict(&self, request: &ChatRequest) {
        self.cache.evict(cache_key(request));
    }

    pub fn complete(&self, request: &ChatRequest, policy: &RetryPolicy) -> Result<GatewayResponse, GatewayError> {
        if request.image_count() > MAX_IMAGES_PER_REQUEST {
            return Err(GatewayError::InvalidRequest(format!(
                "{} images (at most {MAX_IMAGES_PER_REQUEST})",
                request.image_count()
            )));
        }
        let body = request.to_wire();
        let size = body.to_string().len();
        if size > self.config.max_request_bytes {
            return Err(GatewayError::InvalidRequest(format!(
                "request is {size} bytes (cap {})",
                self.config.max_request_bytes
            )));
        }

        let key = cache_key(request);
        if let Some(text) = self.cache.get(key) {
            return Ok(GatewayResponse { text, outcome: Outcome::Ok, attempts: 0, cache_hit: true });
        }

        let max_attempts = policy.max_attempts.max(1);
        let mut malformed: Option<String> = None;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.send(&body)
            };
            match result {
                Ok(raw) => match extract_content(&raw) {
                    Some(text) if self.is_refusal(&text) => {
                        return Ok(GatewayResponse { text, outcome: Outcome::Refusal, attempts: attempt, cache_hit: false });
                    }
                    Some(text) => {
                        self.cache.put(key, &text);
                        return Ok(GatewayResponse { text, outcome: Outcome::Ok, attempts: attempt, cache_hit: false });
                    }
                    None => {
                        log::warn!("malformed completion body on attempt {attempt}");
                        malformed = Some(raw);
                    }
                },
                Err(TransportFailure::Status(code @ (401 | 403), _)) => return Err(GatewayError::Auth(code)),
                Err(failure) if !failure.is_retryable() => {
                    return Err(GatewayError::Transport { attempts: attempt, message: failure.to_string() });
                }
                Err(failure) => {
                    log::debug!("attempt {attempt} failed: {failure}");
                    malformed = None;
                    last_error = failure.to_string();
                }
            }
            if attempt < max_attempts {
                let delay = policy.delay(attempt);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
            }
        }
        match malformed {
            Some(raw) => Ok(GatewayResponse { text: raw, outcome: Outcome::Malformed, attempts: max_attempts, cache_hit: false }),
            None => Err(GatewayError::Transport { attempts: max_attempts, message: last_error }),
        }
    }

    fn is_refusal(&self, text: &str) -> bool {
        let lower = text.trim().to_lowercase();
        self.config.refusal_phrases.iter().any(|p| lower.contains(p.as_str()))
    }
}

/// `choices[0].message.content`
fn extract_content(raw: &str) -> Option<String> {
    let v: Value = serde_json::from_str(raw).ok()?;
    v.get("choices")?.get(0)?.get("message")?.get("content")?.as_str().map(str::to_string)
}

/// Builds the wire response body the mock server returns.
pub fn completion_body(text: &str) -> String {
    json!({
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
    })
    .to_string()
}
