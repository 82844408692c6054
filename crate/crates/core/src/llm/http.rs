use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};
use tracing::warn;

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse, Role};

pub const BASE_URL_ENV: &str = "WEBAGENT_LLM_BASE_URL";
pub const MODEL_ENV: &str = "WEBAGENT_LLM_MODEL";
pub const API_KEY_ENV: &str = "WEBAGENT_LLM_API_KEY";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const MAX_RATE_LIMIT_RETRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub request_timeout: Duration,
    /// First rate-limit backoff; doubles on each retry.
    pub backoff_base: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: api_key.into(),
            request_timeout: Duration::from_secs(300),
            backoff_base: Duration::from_secs(1),
        }
    }

    /// Reads the three `WEBAGENT_LLM_*` variables. The base URL is optional.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let non_empty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        let api_key = non_empty(API_KEY_ENV).ok_or_else(|| LlmError::Config(format!("{API_KEY_ENV} is not set")))?;
        let model = non_empty(MODEL_ENV).ok_or_else(|| LlmError::Config(format!("{MODEL_ENV} is not set")))?;
        let base = non_empty(BASE_URL_ENV).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        Ok(Self::new(base, model, api_key))
    }
}

/// Client for OpenAI-compatible chat-completion endpoints.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn from_env() -> Result<Self, LlmError> {
        Self::new(HttpConfig::from_env()?)
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// Request body in the chat-completions format.
    pub fn request_body(&self, request: &LlmRequest) -> Value {
        let mut messages = vec![json!({ "role": "system", "content": request.system_prompt })];
        for turn in &request.turns {
            let role = match turn.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            let content = match &turn.image {
                None => json!(turn.text),
                Some(png) => {
                    let data = base64::engine::general_purpose::STANDARD.encode(png);
                    json!([
                        { "type": "text", "text": turn.text },
                        { "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{data}") } }
                    ])
                }
            };
            messages.push(json!({ "role": role, "content": content }));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }

    async fn send_once(&self, body: &Value) -> Result<LlmResponse, LlmError> {
        let started = Instant::now();
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(body)
            .send()
            .await
            .map_err(|e| LlmError::ProviderError(format!("request failed: {e}")))?;
        let status = resp.status();
        let retry_after_ms = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|s| (s * 1000.0) as u64);
        let text = resp
            .text()
            .await
            .map_err(|e| LlmError::ProviderError(format!("reading response: {e}")))?;

        if status.as_u16() == 429 {
            return Err(LlmError::RateLimited { retry_after_ms });
        }
        if !status.is_success() {
            let lower = text.to_ascii_lowercase();
            if lower.contains("context_length_exceeded")
                || lower.contains("maximum context length")
                || lower.contains("context window")
                || status.as_u16() == 413
            {
                return Err(LlmError::ContextOverflow(snippet(&text)));
            }
            return Err(LlmError::ProviderError(format!("HTTP {status}: {}", snippet(&text))));
        }

        let v: Value = serde_json::from_str(&text)
            .map_err(|e| LlmError::ProviderError(format!("response is not JSON: {e}")))?;
        let content = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::ProviderError(format!("response has no message content: {}", snippet(&text))))?;
        let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(LlmResponse {
            text: content.to_string(),
            input_tokens: usage("prompt_tokens"),
            output_tokens: usage("completion_tokens"),
            latency_ms: started.elapsed().as_millis() as u64,
            model_id: v
                .get("model")
                .and_then(Value::as_str)
                .unwrap_or(&self.config.model)
                .to_string(),
        })
    }
}

fn snippet(text: &str) -> String {
    let t: String = text.chars().take(400).collect();
    t.trim().to_string()
}

#[async_trait]
impl LlmBackend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let body = self.request_body(request);
        let mut delay = self.config.backoff_base;
        let mut attempt = 0;
        loop {
            match self.send_once(&body).await {
                Err(LlmError::RateLimited { retry_after_ms }) if attempt < MAX_RATE_LIMIT_RETRIES => {
                    attempt += 1;
                    warn!(attempt, ?retry_after_ms, "rate limited; backing off {delay:?}");
                    tokio::time::sleep(delay).await;
                    delay *= 2;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Turn;

    #[test]
    fn env_lookup_names_the_missing_variable() {
        let err = HttpConfig::from_lookup(|_| None).unwrap_err();
        assert_eq!(err, LlmError::Config("WEBAGENT_LLM_API_KEY is not set".into()));
        let err = HttpConfig::from_lookup(|k| (k == API_KEY_ENV).then(|| "k".to_string())).unwrap_err();
        assert!(err.to_string().contains(MODEL_ENV));
        let cfg = HttpConfig::from_lookup(|k| match k {
            API_KEY_ENV => Some("k".into()),
            MODEL_ENV => Some("m".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.base_url, DEFAULT_BASE_URL);
    }

    #[test]
    fn body_shape() {
        let b = HttpBackend::new(HttpConfig::new("http://x/v1/", "m", "k")).unwrap();
        assert_eq!(b.endpoint(), "http://x/v1/chat/completions");
        let req = LlmRequest::new("sys", vec![Turn::user("look").with_image(vec![1, 2, 3]), Turn::assistant("ok")]);
        let body = b.request_body(&req);
        assert_eq!(body["temperature"], json!(0.6));
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(body["messages"][2]["content"], "ok");
    }
}
