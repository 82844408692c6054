use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse};

/// One line of a replay script.
///
/// Token counts are optional; when absent they are estimated as
/// characters / 4 of the prompt and of the reply. `error` makes the call
/// fail instead: `"rate_limited"`, `"context_overflow"` or any other text
/// for a provider error.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptLine {
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScriptLine {
    pub fn reply(text: impl Into<String>) -> Self {
        Self { text: text.into(), ..Self::default() }
    }
}

/// Replays canned completions in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    model_id: String,
    lines: Vec<ScriptLine>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(lines: Vec<ScriptLine>) -> Self {
        Self {
            model_id: "scripted".into(),
            lines,
            cursor: Mutex::new(0),
        }
    }

    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(replies.into_iter().map(ScriptLine::reply).collect())
    }

    /// Parses JSON Lines; blank lines are skipped.
    pub fn from_jsonl(text: &str) -> Result<Self, LlmError> {
        let mut lines = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ScriptLine = serde_json::from_str(line)
                .map_err(|e| LlmError::Config(format!("script line {}: {e}", n + 1)))?;
            lines.push(parsed);
        }
        Ok(Self::new(lines))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("cannot read script {}: {e}", path.display())))?;
        Self::from_jsonl(&text).map_err(|e| match e {
            LlmError::Config(m) => LlmError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.lines.len() - *self.cursor.lock().unwrap()
    }
}

#[async_trait]
impl LlmBackend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let line = {
            let mut cursor = self.cursor.lock().unwrap();
            let Some(line) = self.lines.get(*cursor) else {
                return Err(LlmError::ProviderError("script exhausted".into()));
            };
            *cursor += 1;
            line.clone()
        };
        if let Some(err) = line.error {
            return Err(match err.as_str() {
                "rate_limited" => LlmError::RateLimited { retry_after_ms: None },
                "context_overflow" => LlmError::ContextOverflow("scripted overflow".into()),
                _ => LlmError::ProviderError(err),
            });
        }
        Ok(LlmResponse {
            input_tokens: line.input_tokens.unwrap_or((request.text_chars() / 4) as u64),
            output_tokens: line.output_tokens.unwrap_or((line.text.chars().count() / 4) as u64),
            text: line.text,
            latency_ms: 0,
            model_id: self.model_id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{complete, Turn};

    fn req() -> LlmRequest {
        LlmRequest::new("system!!", vec![Turn::user("12345678")])
    }

    #[tokio::test]
    async fn replays_in_order_then_exhausts() {
        let b = ScriptedBackend::from_replies(["OK"]);
        let r = complete(&b, &req()).await.unwrap();
        assert_eq!(r.text, "OK");
        assert_eq!((r.input_tokens, r.output_tokens), (16 / 4, 0));
        assert_eq!(
            complete(&b, &req()).await.unwrap_err(),
            LlmError::ProviderError("script exhausted".into())
        );
    }

    #[tokio::test]
    async fn explicit_tokens_and_errors() {
        let b = ScriptedBackend::from_jsonl(
            "{\"text\":\"a\",\"input_tokens\":10,\"output_tokens\":3}\n\n{\"error\":\"rate_limited\"}\n{\"error\":\"boom\"}\n",
        )
        .unwrap();
        let r = complete(&b, &req()).await.unwrap();
        assert_eq!((r.input_tokens, r.output_tokens), (10, 3));
        assert!(matches!(complete(&b, &req()).await, Err(LlmError::RateLimited { .. })));
        assert_eq!(complete(&b, &req()).await.unwrap_err(), LlmError::ProviderError("boom".into()));
    }

    #[test]
    fn bad_line_is_reported_with_its_number() {
        let err = ScriptedBackend::from_jsonl("{\"text\":\"a\"}\nnot json").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
