//! Chat-completion client. A [`Transport`] moves one request to a model and
//! back; [`Client`] adds retries with backoff and a transcript of every
//! exchange.

mod http;
mod replay;

pub use http::HttpTransport;
pub use replay::ReplayTransport;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the bearer credential for HTTP endpoints.
pub const API_KEY_ENV: &str = "RULEFORGE_API_KEY";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("invalid conversation: {0}")]
    Conversation(String),
    #[error("fixture format error at line {line}: {reason}")]
    Fixture { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Result<Self, LlmError> {
        let content = content.into();
        if content.trim().is_empty() {
            return Err(LlmError::Conversation(format!("empty {role:?} message")));
        }
        Ok(Self { role, content })
    }
}

/// Messages in order. After an optional leading system message the roles
/// alternate user, assistant, user, ...
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Conversation {
    messages: Vec<ChatMessage>,
}

impl Conversation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_system(content: impl Into<String>) -> Result<Self, LlmError> {
        Ok(Self { messages: vec![ChatMessage::new(Role::System, content)?] })
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn last(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }

    pub fn push(&mut self, msg: ChatMessage) -> Result<(), LlmError> {
        let expected = match self.messages.last().map(|m| m.role) {
            None | Some(Role::System) | Some(Role::Assistant) => Role::User,
            Some(Role::User) => Role::Assistant,
        };
        if msg.role != expected {
            return Err(LlmError::Conversation(format!("expected a {expected:?} message, got {:?}", msg.role)));
        }
        self.messages.push(msg);
        Ok(())
    }

    pub fn push_user(&mut self, content: impl Into<String>) -> Result<(), LlmError> {
        self.push(ChatMessage::new(Role::User, content)?)
    }

    pub fn push_assistant(&mut self, msg: ChatMessage) -> Result<(), LlmError> {
        self.push(msg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    #[serde(with = "millis", rename = "timeout_ms")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further one.
    #[serde(with = "millis", rename = "backoff_ms")]
    pub backoff: Duration,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            model: "llama-3.3-70b-instruct".into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.endpoint.trim().is_empty() || self.model.trim().is_empty() {
            return Err(LlmError::Conversation("endpoint and model must be set".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::Conversation(format!("temperature {} is negative", self.temperature)));
        }
        Ok(())
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Wire request in the chat-completions shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub messages: &'a [ChatMessage],
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    /// Worth retrying: network failures, timeouts, overload.
    #[error("{0}")]
    Transient(String),
    /// Retrying will not help.
    #[error("{0}")]
    Fatal(String),
    /// The endpoint answered with something that is not a completion.
    #[error("{0}")]
    Protocol(String),
}

pub trait Transport: Send + Sync {
    /// Sends one request and returns the assistant's reply text.
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, TransportError>;
}

impl<F> Transport for F
where
    F: Fn(&ChatRequest<'_>) -> Result<String, TransportError> + Send + Sync,
{
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, TransportError> {
        self(request)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub request: serde_json::Value,
    pub reply: String,
}

struct Transcript {
    entries: Vec<TranscriptEntry>,
    sink: Option<BufWriter<File>>,
}

/// A transport plus configuration, retries and a transcript.
pub struct Client {
    transport: Box<dyn Transport>,
    cfg: LlmConfig,
    log: Mutex<Transcript>,
}

impl fmt::Debug for Client {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Client").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Client {
    pub fn new(transport: impl Transport + 'static, cfg: LlmConfig) -> Self {
        Self { transport: Box::new(transport), cfg, log: Mutex::new(Transcript { entries: Vec::new(), sink: None }) }
    }

    /// Also appends every exchange to `path` as JSON lines.
    pub fn with_transcript_file(self, path: &Path) -> Result<Self, LlmError> {
        let file = File::create(path)?;
        self.log.lock().unwrap().sink = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().entries.len()
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.log.lock().unwrap().entries.clone()
    }

    /// Asks for the assistant's reply to a conversation ending in a user turn.
    pub fn complete(&self, conv: &Conversation) -> Result<ChatMessage, LlmError> {
        if conv.last().map(|m| m.role) != Some(Role::User) {
            return Err(LlmError::Conversation("conversation must end with a user message".into()));
        }
        let request = ChatRequest { model: &self.cfg.model, messages: conv.messages(), temperature: self.cfg.temperature };
        let mut delay = self.cfg.backoff;
        let mut attempt = 0;
        let reply = loop {
            match self.transport.send(&request) {
                Ok(reply) => break reply,
                Err(TransportError::Transient(_)) if attempt < self.cfg.max_retries => {
                    attempt += 1;
                    std::thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
                Err(TransportError::Transient(why)) => {
                    return Err(LlmError::Endpoint(format!("{why} (after {} attempts)", attempt + 1)))
                }
                Err(TransportError::Fatal(why)) => return Err(LlmError::Endpoint(why)),
                Err(TransportError::Protocol(why)) => return Err(LlmError::Protocol(why)),
            }
        };
        let msg = ChatMessage::new(Role::Assistant, reply.clone())
            .map_err(|_| LlmError::Protocol("empty completion".into()))?;
        self.record(&request, reply)?;
        Ok(msg)
    }

    fn record(&self, request: &ChatRequest<'_>, reply: String) -> Result<(), LlmError> {
        let mut log = self.log.lock().unwrap();
        let entry = TranscriptEntry {
            seq: log.entries.len() as u64,
            request: serde_json::to_value(request).expect("requests serialize"),
            reply,
        };
        if let Some(sink) = log.sink.as_mut() {
            serde_json::to_writer(&mut *sink, &entry).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
        }
        log.entries.push(entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;

    fn fast() -> LlmConfig {
        LlmConfig { backoff: Duration::ZERO, ..LlmConfig::default() }
    }

    fn ask(text: &str) -> Conversation {
        let mut c = Conversation::new();
        c.push_user(text).unwrap();
        c
    }

    #[test]
    fn conversation_roles_alternate() {
        let mut c = Conversation::with_system("be brief").unwrap();
        assert!(c.push(ChatMessage::new(Role::Assistant, "x").unwrap()).is_err());
        c.push_user("hi").unwrap();
        assert!(c.push_user("again").is_err());
        c.push_assistant(ChatMessage::new(Role::Assistant, "hello").unwrap()).unwrap();
        assert!(c.push(ChatMessage::new(Role::System, "late").unwrap()).is_err());
        c.push_user("bye").unwrap();
        assert_eq!(c.messages().len(), 4);
        assert!(ChatMessage::new(Role::User, "  ").is_err());
    }

    #[test]
    fn replay_serves_in_order_then_fails() {
        let client = Client::new(ReplayTransport::from_replies(["ok", "second"]), fast());
        assert_eq!(client.complete(&ask("a")).unwrap().content, "ok");
        assert_eq!(client.complete(&ask("b")).unwrap().content, "second");
        assert!(matches!(client.complete(&ask("c")), Err(LlmError::Endpoint(_))));
        assert_eq!(client.calls(), 2);
        let log = client.transcript();
        assert_eq!(log[1].seq, 1);
        assert_eq!(log[1].request["messages"][0]["content"], "b");
        assert_eq!(log[0].request["temperature"], 0.0);
    }

    #[test]
    fn conversation_must_end_with_user() {
        let client = Client::new(ReplayTransport::from_replies(["ok"]), fast());
        assert!(matches!(client.complete(&Conversation::new()), Err(LlmError::Conversation(_))));
    }

    #[test]
    fn transient_failures_are_retried() {
        let tries = Arc::new(AtomicUsize::new(0));
        let seen = tries.clone();
        let flaky = move |_: &ChatRequest<'_>| {
            if seen.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TransportError::Transient("connection reset".into()))
            } else {
                Ok("fine".to_string())
            }
        };
        let client = Client::new(flaky, LlmConfig { max_retries: 2, ..fast() });
        assert_eq!(client.complete(&ask("x")).unwrap().content, "fine");
        assert_eq!(tries.load(Ordering::SeqCst), 3);
        assert_eq!(client.calls(), 1);
    }

    #[test]
    fn retries_run_out() {
        let down = |_: &ChatRequest<'_>| Err(TransportError::Transient("down".into()));
        let client = Client::new(down, LlmConfig { max_retries: 3, ..fast() });
        match client.complete(&ask("x")) {
            Err(LlmError::Endpoint(m)) => assert!(m.contains("after 4 attempts"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn protocol_errors_are_not_retried() {
        let tries = Arc::new(AtomicUsize::new(0));
        let seen = tries.clone();
        let bad = move |_: &ChatRequest<'_>| {
            seen.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::Protocol("no choices".into()))
        };
        let client = Client::new(bad, fast());
        assert!(matches!(client.complete(&ask("x")), Err(LlmError::Protocol(_))));
        assert_eq!(tries.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn transcript_file_has_one_line_per_exchange() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let client =
            Client::new(ReplayTransport::from_replies(["r1", "r2"]), fast()).with_transcript_file(&path).unwrap();
        client.complete(&ask("q1")).unwrap();
        client.complete(&ask("q2")).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<TranscriptEntry> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines, client.transcript());
        assert_eq!(lines[1].reply, "r2");
        assert_eq!(lines[0].request["model"], LlmConfig::default().model);
    }

    #[test]
    fn config_round_trips_and_validates() {
        let cfg = LlmConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"timeout_ms\":120000"));
        assert_eq!(serde_json::from_str::<LlmConfig>(&json).unwrap(), cfg);
        assert!(cfg.validate().is_ok());
        assert!(LlmConfig { model: String::new(), ..cfg.clone() }.validate().is_err());
        assert!(LlmConfig { temperature: -1.0, ..cfg }.validate().is_err());
    }
}
