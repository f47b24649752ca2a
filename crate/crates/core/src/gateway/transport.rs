use std::fmt;
use std::time::Duration;

use serde_json::Value;

pub const ENV_URL: &str = "CPR_MLLM_URL";
pub const ENV_KEY: &str = "CPR_MLLM_KEY";

#[derive(Debug, Clone, PartialEq)]
pub enum TransportFailure {
    Status(u16, String),
    Connection(String),
}

impl TransportFailure {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportFailure::Status(code, _) => matches!(code, 408 | 429 | 500..=599),
            TransportFailure::Connection(_) => true,
        }
    }
}

impl fmt::Display for TransportFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportFailure::Status(code, body) => write!(f, "HTTP {code}: {body}"),
            TransportFailure::Connection(msg) => write!(f, "connection error: {msg}"),
        }
    }
}

/// Sends one chat-completions body and returns the raw response body.
pub trait Transport: Send + Sync {
    fn send(&self, body: &Value) -> Result<String, TransportFailure>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .into();
        HttpTransport { agent, url: url.into(), api_key }
    }

    /// Reads `CPR_MLLM_URL` and `CPR_MLLM_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok()?;
        Some(HttpTransport::new(url, std::env::var(ENV_KEY).ok()))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn send(&self, body: &Value) -> Result<String, TransportFailure> {
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| TransportFailure::Connection(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportFailure::Connection(e.to_string()))?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(TransportFailure::Status(status, text))
        }
    }
}
