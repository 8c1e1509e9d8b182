use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatRequest, LlmError, Transport, TransportError};

/// Serves scripted replies strictly in order, ignoring the request.
///
/// Fixture files hold one `{"reply": "..."}` object per line.
#[derive(Debug)]
pub struct ReplayTransport {
    replies: Vec<String>,
    next: Mutex<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureLine {
    reply: String,
}

impl ReplayTransport {
    pub fn from_replies<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self { replies: replies.into_iter().map(Into::into).collect(), next: Mutex::new(0) }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut replies = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FixtureLine =
                serde_json::from_str(line).map_err(|e| LlmError::Fixture { line: i + 1, reason: e.to_string() })?;
            replies.push(rec.reply);
        }
        Ok(Self::from_replies(replies))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.replies.len() - *self.next.lock().unwrap()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, _request: &ChatRequest<'_>) -> Result<String, TransportError> {
        let mut next = self.next.lock().unwrap();
        let reply = self.replies.get(*next).cloned().ok_or_else(|| {
            TransportError::Fatal(format!("replay fixture exhausted after {} replies", self.replies.len()))
        })?;
        *next += 1;
        Ok(reply)
    }
}
