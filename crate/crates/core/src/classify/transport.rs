//! Chat-completion transports: HTTP for hosted models, scripted mock for
//! tests and offline runs.
//!
//! Request body (`POST <endpoint>`, JSON):
//!
//! ```json
//! {"schema": "ermatch.chat.v1", "model": "<model id>",
//!  "messages": [{"role": "user", "content": "<prompt>"}],
//!  "temperature": 0, "deterministic": true}
//! ```
//!
//! The response is read from `choices[0].message.content` (the common
//! chat-completions shape) or, failing that, a top-level `content` string.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity_model::CaseId;

pub const REQUEST_SCHEMA: &str = "ermatch.chat.v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("http: {0}")]
    Http(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("malformed response body: {0}")]
    Body(String),
    #[error("no scripted response for case {0}")]
    Unscripted(CaseId),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Http(_) => true,
            Self::Status(code) => *code == 429 || *code >= 500,
            Self::Body(_) | Self::Unscripted(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub schema: String,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub deterministic: bool,
}

impl ChatRequest {
    /// A single user message with sampling pinned to deterministic.
    pub fn new(model: &str, prompt: String) -> Self {
        Self {
            schema: REQUEST_SCHEMA.to_string(),
            model: model.to_string(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: 0.0,
            deterministic: true,
        }
    }
}

/// Anything able to answer a chat request. Implementations must be safe to
/// call from several worker threads.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, case_id: &CaseId, request: &ChatRequest) -> Result<String, TransportError>;
}

pub struct HttpChatTransport {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpChatTransport {
    pub fn new(endpoint: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the answer text from a response body.
pub(crate) fn response_text(body: &str) -> Result<String, TransportError> {
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| TransportError::Body(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .or(parsed.content)
        .ok_or_else(|| TransportError::Body("no choices[0].message.content or content field".into()))
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, _case_id: &CaseId, request: &ChatRequest) -> Result<String, TransportError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| TransportError::Http(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(TransportError::Status(status.as_u16()));
        }
        let body = response.text().map_err(|e| TransportError::Http(e.to_string()))?;
        response_text(&body)
    }
}

/// Scripted answers keyed by case id. File form: a JSON object
/// `{"<case id>": "<response text>", ...}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockScript {
    responses: HashMap<CaseId, String>,
}

impl MockScript {
    pub fn from_pairs<K: Into<CaseId>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            responses: pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn get(&self, case_id: &CaseId) -> Option<&str> {
        self.responses.get(case_id).map(String::as_str)
    }
}

/// Deterministic stand-in for a chat model. Counts every call.
#[derive(Debug, Default)]
pub struct MockTransport {
    script: MockScript,
    default: Option<String>,
    calls: AtomicUsize,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            default: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Response for cases missing from the script.
    pub fn with_default(mut self, response: &str) -> Self {
        self.default = Some(response.to_string());
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatTransport for MockTransport {
    fn complete(&self, case_id: &CaseId, _request: &ChatRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.script
            .get(case_id)
            .or(self.default.as_deref())
            .map(str::to_string)
            .ok_or_else(|| TransportError::Unscripted(case_id.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    #[test]
    fn request_body_shape() {
        let req = ChatRequest::new("qwen2.5", "hi".into());
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["schema"], REQUEST_SCHEMA);
        assert_eq!(json["model"], "qwen2.5");
        assert_eq!(json["messages"][0]["role"], "user");
        assert_eq!(json["messages"][0]["content"], "hi");
        assert_eq!(json["temperature"], 0.0);
        assert_eq!(json["deterministic"], true);
    }

    #[test]
    fn response_shapes() {
        assert_eq!(
            response_text(r#"{"choices":[{"message":{"role":"assistant","content":"Equal"}}]}"#).unwrap(),
            "Equal"
        );
        assert_eq!(response_text(r#"{"content":"Different"}"#).unwrap(), "Different");
        assert!(matches!(response_text("{}"), Err(TransportError::Body(_))));
        assert!(matches!(response_text("nope"), Err(TransportError::Body(_))));
    }

    /// One-shot HTTP server answering a single request with `body`.
    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut request = vec![0u8; length];
            reader.read_exact(&mut request).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            String::from_utf8(request).unwrap()
        });
        (format!("http://{addr}/v1/chat"), handle)
    }

    #[test]
    fn http_transport_round_trip() {
        let (url, server) = serve_once("200 OK", r#"{"choices":[{"message":{"content":"Equal"}}]}"#);
        let t = HttpChatTransport::new(&url, Duration::from_secs(5)).unwrap();
        let answer = t.complete(&"c1".into(), &ChatRequest::new("m", "prompt".into())).unwrap();
        assert_eq!(answer, "Equal");
        let sent: ChatRequest = serde_json::from_str(&server.join().unwrap()).unwrap();
        assert_eq!(sent.messages[0].content, "prompt");
    }

    #[test]
    fn http_transport_status_error() {
        let (url, server) = serve_once("503 Service Unavailable", "{}");
        let t = HttpChatTransport::new(&url, Duration::from_secs(5)).unwrap();
        let err = t.complete(&"c1".into(), &ChatRequest::new("m", "p".into())).unwrap_err();
        assert_eq!(err, TransportError::Status(503));
        assert!(err.is_retryable());
        server.join().unwrap();
    }

    #[test]
    fn mock_counts_calls() {
        let m = MockTransport::new(MockScript::from_pairs([("a", "Equal")]));
        let req = ChatRequest::new("m", String::new());
        assert_eq!(m.complete(&"a".into(), &req).unwrap(), "Equal");
        assert!(m.complete(&"b".into(), &req).is_err());
        assert_eq!(m.calls(), 2);
    }
}
