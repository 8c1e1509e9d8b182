use serde_json::Value;

use super::{ChatRequest, LlmConfig, LlmError, Transport, TransportError, API_KEY_ENV};

/// Posts chat-completions JSON to an endpoint URL.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(cfg: &LlmConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| LlmError::Endpoint(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client, endpoint: cfg.endpoint.clone(), api_key })
    }

    /// Like [`HttpTransport::new`], taking the key from `RULEFORGE_API_KEY`.
    pub fn from_env(cfg: &LlmConfig) -> Result<Self, LlmError> {
        Self::new(cfg, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest<'_>) -> Result<String, TransportError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| TransportError::Transient(format!("request failed: {e}")))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| TransportError::Transient(format!("reading reply failed: {e}")))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Transient(format!("HTTP {status}: {}", snippet(&body))));
        }
        if !status.is_success() {
            return Err(TransportError::Fatal(format!("HTTP {status}: {}", snippet(&body))));
        }
        parse_reply(&body)
    }
}

/// Extracts `choices[0].message.content` from a completion reply.
pub(crate) fn parse_reply(body: &str) -> Result<String, TransportError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| TransportError::Protocol(format!("reply is not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError::Protocol(format!("reply has no choices[0].message.content: {}", snippet(body))))
}

fn snippet(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if s.len() < body.len() {
        s.push_str("...");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        let ok = r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_reply(ok).unwrap(), "hi");
        assert!(matches!(parse_reply(r#"{"choices":[]}"#), Err(TransportError::Protocol(_))));
        assert!(matches!(parse_reply("<html>"), Err(TransportError::Protocol(_))));
        assert!(matches!(
            parse_reply(r#"{"choices":[{"message":{"content":null}}]}"#),
            Err(TransportError::Protocol(_))
        ));
    }
}
