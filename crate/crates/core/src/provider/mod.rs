//! Chat-completion backends: an HTTP client for the standard
//! `/chat/completions` schema and a deterministic offline mock.

mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use http::{HttpProvider, HttpReply, ReqwestTransport, Transport, TransportError};
pub use mock::{mock_complete, MockProvider, FILLERS, SUBSTITUTION_GROUPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
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

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl CompletionRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>, temperature: f64) -> Self {
        Self {
            model: model.into(),
            messages,
            temperature,
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |why: &str| Err(ProviderError::InvalidRequest(why.to_string()));
        if self.messages.is_empty() {
            return bad("request has no messages");
        }
        if self.messages.iter().skip(1).any(|m| m.role == Role::System) {
            return bad("a system message may only appear first");
        }
        if self
            .messages
            .iter()
            .any(|m| m.role != Role::Assistant && m.content.is_empty())
        {
            return bad("only assistant messages may be empty");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a non-negative number");
        }
        if self.max_tokens == Some(0) {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    /// Content of the last user message, if any.
    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn system(&self) -> Option<&str> {
        self.messages
            .first()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("API key environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("authentication rejected (HTTP {status}): {body}")]
    AuthRejected { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("rate limited; gave up after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("server error HTTP {status} after {attempts} attempt(s): {body}")]
    Server { status: u16, attempts: u32, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    BadRequest { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: missing `{missing}`")]
    MalformedResponse { missing: String },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("invalid provider config: {0}")]
    Config(String),
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout_secs() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    4
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_initial_ms() -> u64 {
    1_000
}
fn default_backoff_cap_ms() -> u64 {
    32_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// First backoff ceiling; doubles per retry up to `backoff_cap_ms`.
    #[serde(default = "default_backoff_initial_ms")]
    pub backoff_initial_ms: u64,
    #[serde(default = "default_backoff_cap_ms")]
    pub backoff_cap_ms: u64,
}

impl ProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: default_api_key_env(),
            model: model.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrency: default_concurrency(),
            backoff_initial_ms: default_backoff_initial_ms(),
            backoff_cap_ms: default_backoff_cap_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |why: String| Err(ProviderError::Config(why));
        if self.max_retries > 8 {
            return bad(format!("max_retries {} exceeds 8", self.max_retries));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout must be positive".into());
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be at least 1".into());
        }
        if let Err(e) = reqwest::Url::parse(&self.base_url) {
            return bad(format!("base_url `{}`: {e}", self.base_url));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Anything that can answer a chat-completion request.
pub trait CompletionProvider: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError>;

    /// Model used when a request leaves `model` empty.
    fn default_model(&self) -> &str;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for &P {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }

    fn default_model(&self) -> &str {
        (**self).default_model()
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }

    fn default_model(&self) -> &str {
        (**self).default_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = CompletionRequest::new("m", vec![ChatMessage::system("s"), ChatMessage::user("u")], 0.0);
        assert!(ok.validate().is_ok());
        let late_system = CompletionRequest::new("m", vec![ChatMessage::user("u"), ChatMessage::system("s")], 0.0);
        assert!(late_system.validate().is_err());
        assert!(CompletionRequest::new("m", vec![], 0.0).validate().is_err());
        assert!(CompletionRequest::new("m", vec![ChatMessage::user("u")], -1.0).validate().is_err());
        let placeholder = CompletionRequest::new("m", vec![ChatMessage::user("u"), ChatMessage::assistant("")], 0.0);
        assert!(placeholder.validate().is_ok());
    }

    #[test]
    fn config_defaults_and_limits() {
        let cfg: ProviderConfig = serde_json::from_str(r#"{"base_url":"http://localhost:8080/v1","model":"gpt-4o"}"#).unwrap();
        assert_eq!(cfg.api_key_env, "OPENAI_API_KEY");
        assert_eq!(cfg.endpoint(), "http://localhost:8080/v1/chat/completions");
        assert!(cfg.validate().is_ok());
        let mut bad = cfg.clone();
        bad.max_retries = 9;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.timeout_secs = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn body_omits_absent_max_tokens() {
        let req = CompletionRequest::new("gpt-4o", vec![ChatMessage::user("hi")], 0.0);
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"gpt-4o","messages":[{"role":"user","content":"hi"}],"temperature":0.0}"#
        );
    }
}
