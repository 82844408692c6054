//! Chat-completion backends and decision parsing.
//!
//! Every backend implements [`LlmBackend`]. [`ScriptedBackend`] replays a
//! JSON Lines file and is what the tests and the default benchmark use;
//! [`HttpBackend`] speaks the common `/chat/completions` wire format;
//! [`RecordingBackend`] wraps any backend and writes a replayable script.

mod decision;
mod http;
mod recording;
mod scripted;

pub use decision::{parse_agent_decision, render_decision, AgentDecision, MAX_ACTIONS};
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV, BASE_URL_ENV, MODEL_ENV};
pub use recording::RecordingBackend;
pub use scripted::{ScriptLine, ScriptedBackend};

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling temperature used unless a request overrides it.
pub const DEFAULT_TEMPERATURE: f64 = 0.6;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("rate limited{}", retry_after_ms.map(|ms| format!(", retry after {ms} ms")).unwrap_or_default())]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("request exceeds the model context window: {0}")]
    ContextOverflow(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("no decision object found in the model output")]
    UnparseableDecision,
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

/// One conversation turn. Images (PNG) are only allowed on user turns.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub image: Option<Vec<u8>>,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into(), image: None }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into(), image: None }
    }

    pub fn with_image(mut self, png: Vec<u8>) -> Self {
        self.image = Some(png);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub system_prompt: String,
    pub turns: Vec<Turn>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl LlmRequest {
    pub fn new(system_prompt: impl Into<String>, turns: Vec<Turn>) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            turns,
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.turns.is_empty() {
            return Err(LlmError::InvalidRequest("a request needs at least one turn".into()));
        }
        if self.turns.iter().any(|t| t.role != Role::User && t.image.is_some()) {
            return Err(LlmError::InvalidRequest("images are only allowed on user turns".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn has_image(&self) -> bool {
        self.turns.iter().any(|t| t.image.is_some())
    }

    /// Character count of all prompt text, used for mock token estimates.
    pub fn text_chars(&self) -> usize {
        self.system_prompt.chars().count() + self.turns.iter().map(|t| t.text.chars().count()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub model_id: String,
}

impl LlmResponse {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Sends one request. Callers should go through [`complete`] so the request is validated.
    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

#[async_trait]
impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request).await
    }
}

#[async_trait]
impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        (**self).complete(request).await
    }
}

/// Validates `request` and sends it to `backend`.
pub async fn complete(backend: &(impl LlmBackend + ?Sized), request: &LlmRequest) -> Result<LlmResponse, LlmError> {
    request.validate()?;
    backend.complete(request).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_temperature() {
        let r = LlmRequest::new("sys", vec![Turn::user("hi")]);
        assert_eq!(r.temperature, 0.6);
        r.validate().unwrap();
    }

    #[test]
    fn request_invariants() {
        assert!(LlmRequest::new("s", vec![]).validate().is_err());
        let r = LlmRequest::new("s", vec![Turn::assistant("a").with_image(vec![1])]);
        assert!(matches!(r.validate(), Err(LlmError::InvalidRequest(_))));
        let mut r = LlmRequest::new("s", vec![Turn::user("a").with_image(vec![1])]);
        r.validate().unwrap();
        r.temperature = 2.5;
        assert!(r.validate().is_err());
    }
}
