//! Scripted stand-in for an MLLM endpoint.
//!
//! A script is a JSONL file of entries. Each request consumes the first entry
//! that still has uses left and whose optional `match` string occurs in the
//! request's probe text (all text parts plus one `image:<fnv hex>` token per
//! image). Entries without `match` therefore serve requests in arrival order.
//!
//! ```text
//! {"reply": "1. Right Arm: Lift the right arm."}
//! {"match": "image:1f0c...", "refuse": true}
//! {"fail": 503, "times": 2}
//! ```

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::transport::{Transport, TransportFailure};
use super::completion_body;
use crate::features::fnv1a64;

const REFUSAL_TEXT: &str = "I'm sorry, but I can't help with that.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<u16>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refuse: bool,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub times: usize,
}

fn one() -> usize {
    1
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

impl ScriptEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        ScriptEntry { pattern: None, reply: Some(text.into()), fail: None, refuse: false, times: 1 }
    }

    pub fn fail(status: u16) -> Self {
        ScriptEntry { pattern: None, reply: None, fail: Some(status), refuse: false, times: 1 }
    }

    pub fn refuse() -> Self {
        ScriptEntry { pattern: None, reply: None, fail: None, refuse: true, times: 1 }
    }

    pub fn matching(mut self, pattern: impl Into<String>) -> Self {
        self.pattern = Some(pattern.into());
        self
    }

    pub fn times(mut self, n: usize) -> Self {
        self.times = n;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapturedRequest {
    pub probe: String,
    pub texts: Vec<String>,
    pub image_digests: Vec<String>,
    /// Index of the script entry that answered, if any.
    pub entry: Option<usize>,
}

pub struct MockScript {
    entries: Vec<ScriptEntry>,
    state: Mutex<(Vec<usize>, Vec<CapturedRequest>)>,
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        let remaining = entries.iter().map(|e| e.times).collect();
        MockScript { entries, state: Mutex::new((remaining, Vec::new())) }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(line).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            entries.push(entry);
        }
        Ok(MockScript::new(entries))
    }

    pub fn to_jsonl(entries: &[ScriptEntry]) -> String {
        entries.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
    }

    /// All requests received so far, in arrival order.
    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.state.lock().unwrap().1.clone()
    }

    /// Uses left across all entries.
    pub fn remaining(&self) -> usize {
        self.state.lock().unwrap().0.iter().sum()
    }

    /// Produces `(status, body)` for a wire request body.
    pub fn respond(&self, body: &Value) -> (u16, String) {
        let (texts, image_digests) = request_parts(body);
        let probe = probe_text(&texts, &image_digests);
        let mut state = self.state.lock().unwrap();
        let chosen = self.entries.iter().enumerate().position(|(i, e)| {
            state.0[i] > 0 && e.pattern.as_deref().is_none_or(|p| probe.contains(p))
        });
        state.1.push(CapturedRequest { probe, texts, image_digests, entry: chosen });
        let Some(i) = chosen else {
            log::warn!("mock script exhausted");
            return (500, r#"{"error":"mock script exhausted"}"#.into());
        };
        state.0[i] -= 1;
        let entry = &self.entries[i];
        if let Some(status) = entry.fail {
            (status, format!(r#"{{"error":"scripted failure {status}"}}"#))
        } else if entry.refuse {
            (200, completion_body(REFUSAL_TEXT))
        } else {
            (200, completion_body(entry.reply.as_deref().unwrap_or("")))
        }
    }
}

/// `image:<16 hex digits>` for PNG bytes.
pub fn image_digest(png: &[u8]) -> String {
    format!("image:{:016x}", fnv1a64(png))
}

fn request_parts(body: &Value) -> (Vec<String>, Vec<String>) {
    let mut texts = Vec::new();
    let mut images = Vec::new();
    let b64 = base64::engine::general_purpose::STANDARD;
    let messages = body.get("messages").and_then(Value::as_array).cloned().unwrap_or_default();
    for m in &messages {
        match m.get("content") {
            Some(Value::String(s)) => texts.push(s.clone()),
            Some(Value::Array(parts)) => {
                for p in parts {
                    if let Some(t) = p.get("text").and_then(Value::as_str) {
                        texts.push(t.to_string());
                    } else if let Some(url) = p.pointer("/image_url/url").and_then(Value::as_str) {
                        let data = url.split_once("base64,").map(|(_, d)| d).unwrap_or("");
                        let bytes = b64.decode(data).unwrap_or_default();
                        images.push(image_digest(&bytes));
                    }
                }
            }
            _ => {}
        }
    }
    (texts, images)
}

fn probe_text(texts: &[String], images: &[String]) -> String {
    let mut out = texts.join("\n");
    for d in images {
        out.push('\n');
        out.push_str(d);
    }
    out
}

/// Probe text for a wire request body.
pub fn request_probe(body: &Value) -> String {
    let (t, i) = request_parts(body);
    probe_text(&t, &i)
}

/// In-process transport backed by a script.
pub struct MockTransport {
    script: Arc<MockScript>,
}

impl MockTransport {
    pub fn new(script: Arc<MockScript>) -> Self {
        MockTransport { script }
    }
}

impl Transport for MockTransport {
    fn send(&self, body: &Value) -> Result<String, TransportFailure> {
        match self.script.respond(body) {
            (200, b) => Ok(b),
            (status, b) => Err(TransportFailure::Status(status, b)),
        }
    }
}

/// HTTP server answering every POST from a script.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
    script: Arc<MockScript>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves on a
    /// background thread until dropped.
    pub fn start(script: Arc<MockScript>, addr: &str) -> std::io::Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock server is not bound to an IP address"))?;
        let server = Arc::new(server);
        let handle = {
            let server = server.clone();
            let script = script.clone();
            thread::spawn(move || serve(&server, &script))
        };
        Ok(MockServer { server, addr, handle: Some(handle), script })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Chat-completions URL of the server.
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn script(&self) -> &Arc<MockScript> {
        &self.script
    }

    /// Blocks until the serving thread ends.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(server: &tiny_http::Server, script: &MockScript) {
    for mut request in server.incoming_requests() {
        let mut raw = String::new();
        let (status, body) = match request.as_reader().read_to_string(&mut raw) {
            Ok(_) => match serde_json::from_str::<Value>(&raw) {
                Ok(v) => script.respond(&v),
                Err(e) => (400, format!(r#"{{"error":"bad json: {e}"}}"#)),
            },
            Err(e) => (400, format!(r#"{{"error":"{e}"}}"#)),
        };
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
        let response = tiny_http::Response::from_string(body).with_status_code(status).with_header(header);
        if let Err(e) = request.respond(response) {
            log::warn!("mock server failed to respond: {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatRequest, ContentPart, Gateway, GatewayConfig, HttpTransport, ResponseCache, RetryPolicy};

    #[test]
    fn match_patterns_select_entries() {
        let script = MockScript::new(vec![
            ScriptEntry::reply("for beta").matching("beta"),
            ScriptEntry::reply("fallback"),
        ]);
        let req = |t: &str| ChatRequest::user("m", 0.2, vec![ContentPart::Text(t.into())]).to_wire();
        let (_, a) = script.respond(&req("alpha"));
        let (_, b) = script.respond(&req("beta"));
        assert!(a.contains("fallback"));
        assert!(b.contains("for beta"));
        assert_eq!(script.respond(&req("gamma")).0, 500);
    }

    #[test]
    fn image_digest_appears_in_probe() {
        let png = vec![9u8, 8, 7];
        let req = ChatRequest::user("m", 0.2, vec![ContentPart::Text("look".into()), ContentPart::Image(png.clone())]);
        let probe = request_probe(&req.to_wire());
        assert!(probe.starts_with("look\n"));
        assert!(probe.ends_with(&image_digest(&png)));
    }

    #[test]
    fn script_file_round_trip() {
        let entries = vec![ScriptEntry::reply("x").matching("y"), ScriptEntry::fail(503).times(2), ScriptEntry::refuse()];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.jsonl");
        std::fs::write(&path, MockScript::to_jsonl(&entries)).unwrap();
        let script = MockScript::from_file(&path).unwrap();
        assert_eq!(script.entries, entries);
        assert_eq!(script.remaining(), 4);
    }

    #[test]
    fn http_round_trip_through_server() {
        let script = Arc::new(MockScript::new(vec![ScriptEntry::fail(502), ScriptEntry::reply("over the wire")]));
        let server = MockServer::start(script.clone(), "127.0.0.1:0").unwrap();
        let gw = Gateway::new(
            Box::new(HttpTransport::new(server.url(), Some("secret".into()))),
            ResponseCache::in_memory(),
            GatewayConfig::default(),
        );
        let req = ChatRequest::user("m", 0.2, vec![ContentPart::Text("hello".into())]);
        let r = gw.complete(&req, &RetryPolicy::immediate(3)).unwrap();
        assert_eq!(r.text, "over the wire");
        assert_eq!(r.attempts, 2);
        assert_eq!(script.requests().len(), 2);
    }
}
