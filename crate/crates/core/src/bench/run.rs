use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::{self, StreamExt};

use super::{score_task, ScoredResult, TaskSpec, TaskSuite, default_scripts};
use crate::agent::{run_task, EpisodeConfig};
use crate::browser::{Browser, BrowserError, PageDriver, SessionConfig};
use crate::fixtures::FixtureServer;
use crate::llm::{LlmBackend, LlmError, ScriptedBackend};

/// Opens a fresh page driver for each task.
#[async_trait]
pub trait DriverFactory: Send + Sync {
    async fn open(&self) -> Result<Box<dyn PageDriver>, BrowserError>;
}

/// One shared browser; every task gets its own isolated context.
pub struct BrowserPool {
    browser: Browser,
    config: SessionConfig,
}

impl BrowserPool {
    /// Connects to `config.endpoint` when set, otherwise launches a browser.
    pub async fn start(config: SessionConfig) -> Result<Self, BrowserError> {
        config.validate()?;
        let browser = match &config.endpoint {
            Some(ep) => Browser::connect(ep).await?,
            None => Browser::launch(&config).await?,
        };
        Ok(Self { browser, config })
    }

    pub async fn close(&self) {
        self.browser.close().await;
    }
}

#[async_trait]
impl DriverFactory for BrowserPool {
    async fn open(&self) -> Result<Box<dyn PageDriver>, BrowserError> {
        Ok(Box::new(self.browser.new_session(self.config.clone()).await?))
    }
}

/// Supplies one backend per task.
pub trait BackendFactory: Send + Sync {
    fn model_id(&self) -> String;
    fn for_task(&self, task: &TaskSpec) -> Result<Box<dyn LlmBackend>, LlmError>;
}

/// Scripted replies per task, read from `<dir>/<task_id>.jsonl` or from the embedded default scripts.
pub struct ScriptDir {
    dir: Option<PathBuf>,
    model_id: String,
}

impl ScriptDir {
    pub fn new(dir: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        Self {
            dir: Some(dir.into()),
            model_id: model_id.into(),
        }
    }

    /// Scripts shipped with the default suite.
    pub fn embedded(model_id: impl Into<String>) -> Self {
        Self {
            dir: None,
            model_id: model_id.into(),
        }
    }
}

impl BackendFactory for ScriptDir {
    fn model_id(&self) -> String {
        self.model_id.clone()
    }

    fn for_task(&self, task: &TaskSpec) -> Result<Box<dyn LlmBackend>, LlmError> {
        let backend = match &self.dir {
            Some(dir) => ScriptedBackend::from_file(dir.join(format!("{}.jsonl", task.task_id)))?,
            None => {
                let scripts = default_scripts();
                let text = scripts
                    .get(&task.task_id)
                    .ok_or_else(|| LlmError::Config(format!("no embedded script for {}", task.task_id)))?;
                ScriptedBackend::from_jsonl(text)?
            }
        };
        Ok(Box::new(backend.with_model_id(self.model_id.clone())))
    }
}

/// The same backend for every task (e.g. an HTTP client).
pub struct SharedBackend(pub Arc<dyn LlmBackend>);

impl BackendFactory for SharedBackend {
    fn model_id(&self) -> String {
        self.0.model_id().to_string()
    }

    fn for_task(&self, _task: &TaskSpec) -> Result<Box<dyn LlmBackend>, LlmError> {
        Ok(Box::new(self.0.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    /// Applied to every task; `start_url` and `trace_dir` are set per task.
    pub episode: EpisodeConfig,
    pub parallelism: usize,
    /// Traces go to `<out_dir>/<model>/<task_id>/`.
    pub out_dir: Option<PathBuf>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            parallelism: 1,
            out_dir: None,
        }
    }
}

/// Runs every task and returns results in suite order. Per-task errors
/// become failed results.
pub async fn run_suite(
    suite: &TaskSuite,
    drivers: &dyn DriverFactory,
    backends: &dyn BackendFactory,
    options: &SuiteOptions,
) -> Vec<ScoredResult> {
    let parallelism = options.parallelism.max(1);
    stream::iter(suite.tasks.iter())
        .map(|task| run_one(task, drivers, backends, options))
        .buffered(parallelism)
        .collect()
        .await
}

async fn run_one(
    task: &TaskSpec,
    drivers: &dyn DriverFactory,
    backends: &dyn BackendFactory,
    options: &SuiteOptions,
) -> ScoredResult {
    let model_id = backends.model_id();
    let server = if task.uses_fixtures() {
        match FixtureServer::start_local().await {
            Ok(s) => Some(s),
            Err(e) => return ScoredResult::failed(task, &model_id, format!("fixture server: {e}")),
        }
    } else {
        None
    };
    let base = server.as_ref().map(|s| s.base_url()).unwrap_or_default();
    let resolved = TaskSpec {
        start_url: task.resolved_start_url(&base),
        validator: task.validator.resolved(&base),
        ..task.clone()
    };

    let mut config = options.episode.clone();
    config.start_url = resolved.start_url.clone().or(config.start_url);
    config.trace_dir = options
        .out_dir
        .as_ref()
        .map(|d| d.join(sanitize(&model_id)).join(&task.task_id));

    let result = run_scored(&resolved, &model_id, drivers, backends, &config).await;
    if let Some(s) = server {
        s.shutdown();
    }
    result
}

async fn run_scored(
    task: &TaskSpec,
    model_id: &str,
    drivers: &dyn DriverFactory,
    backends: &dyn BackendFactory,
    config: &EpisodeConfig,
) -> ScoredResult {
    let backend = match backends.for_task(task) {
        Ok(b) => b,
        Err(e) => return ScoredResult::failed(task, model_id, format!("error: {e}")),
    };
    let driver = match drivers.open().await {
        Ok(d) => d,
        Err(e) => return ScoredResult::failed(task, model_id, format!("error: {e}")),
    };
    let limit = Duration::from_secs(task.timeout_s);
    let episode = tokio::time::timeout(limit, run_task(&task.query, driver.as_ref(), backend.as_ref(), config)).await;
    driver.close().await;
    let mut scored = match episode {
        Err(_) => ScoredResult::failed(task, model_id, format!("timed out after {} s", task.timeout_s)),
        Ok(Err(e)) => ScoredResult::failed(task, model_id, format!("error: {e}")),
        Ok(Ok(ep)) => match score_task(task, &ep, model_id).await {
            Ok(r) => r,
            Err(e) => ScoredResult::failed(task, model_id, e.to_string()),
        },
    };
    if scored.trace_path.is_none() {
        scored.trace_path = config.trace_dir.as_ref().map(|d| d.join(crate::agent::TRACE_FILE)).filter(|p| p.exists());
    }
    scored
}

/// Model ids may contain `/` or `:`; keep directory names flat.
fn sanitize(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}
