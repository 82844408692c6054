use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{LlmBackend, LlmError, LlmRequest, LlmResponse, ScriptLine};

/// Wraps a backend and appends every reply to a JSON Lines script that
/// [`ScriptedBackend`](super::ScriptedBackend) can replay.
#[derive(Debug)]
pub struct RecordingBackend<B> {
    inner: B,
    path: PathBuf,
    lock: Mutex<()>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    /// Truncates `path` and starts recording into it.
    pub fn create(inner: B, path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref().to_path_buf();
        std::fs::File::create(&path)
            .map_err(|e| LlmError::Config(format!("cannot create {}: {e}", path.display())))?;
        Ok(Self { inner, path, lock: Mutex::new(()) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, line: &ScriptLine) {
        let _guard = self.lock.lock().unwrap();
        let json = serde_json::to_string(line).expect("script lines serialize");
        let written = std::fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .and_then(|mut f| writeln!(f, "{json}"));
        if let Err(e) = written {
            tracing::warn!("recording to {} failed: {e}", self.path.display());
        }
    }
}

#[async_trait]
impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let result = self.inner.complete(request).await;
        let line = match &result {
            Ok(r) => ScriptLine {
                text: r.text.clone(),
                input_tokens: Some(r.input_tokens),
                output_tokens: Some(r.output_tokens),
                error: None,
            },
            Err(LlmError::RateLimited { .. }) => ScriptLine { error: Some("rate_limited".into()), ..Default::default() },
            Err(LlmError::ContextOverflow(_)) => {
                ScriptLine { error: Some("context_overflow".into()), ..Default::default() }
            }
            Err(LlmError::ProviderError(m)) => ScriptLine { error: Some(m.clone()), ..Default::default() },
            Err(e) => ScriptLine { error: Some(e.to_string()), ..Default::default() },
        };
        self.append(&line);
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{complete, ScriptedBackend, Turn};

    #[tokio::test]
    async fn recording_replays_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rec.jsonl");
        let req = LlmRequest::new("s", vec![Turn::user("hello world")]);
        let rec = RecordingBackend::create(ScriptedBackend::from_replies(["one", "two"]), &path).unwrap();
        let a = complete(&rec, &req).await.unwrap();
        let b = complete(&rec, &req).await.unwrap();
        let c = complete(&rec, &req).await.unwrap_err();

        let replay = ScriptedBackend::from_file(&path).unwrap();
        assert_eq!(replay.len(), 3);
        assert_eq!(complete(&replay, &req).await.unwrap(), a);
        assert_eq!(complete(&replay, &req).await.unwrap(), b);
        assert_eq!(complete(&replay, &req).await.unwrap_err(), c);
    }
}
