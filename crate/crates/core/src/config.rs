//! Operator settings for the command-line tool.
//!
//! Settings come from three layers, highest first: command-line flags,
//! `WEBAGENT_*` environment variables, then a `webagent.toml` file. Every
//! key in the file mirrors a flag of the same name with `-` spelled `_`:
//!
//! ```toml
//! model = "gpt-4o"
//! headless = true
//! step_budget = 50
//! token_budget = 400000
//! viewport = "1280x720"
//! parallelism = 3
//! out_dir = "results"
//! suite = "suites/default.json"
//! scripted = "scripts/"
//! vision = true
//! browser_path = "/usr/bin/chromium"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::agent::EpisodeConfig;
use crate::browser::SessionConfig;
use crate::dom::Viewport;

pub const CONFIG_FILE: &str = "webagent.toml";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

/// One settings layer. Unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub model: Option<String>,
    pub headless: Option<bool>,
    pub step_budget: Option<u32>,
    pub token_budget: Option<u64>,
    pub viewport: Option<String>,
    pub parallelism: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub scripted: Option<PathBuf>,
    pub vision: Option<bool>,
    pub browser_path: Option<PathBuf>,
}

impl Layer {
    pub fn parse(text: &str, path: &Path) -> Result<Layer, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Layer, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Loads `path` when given, else `./webagent.toml` when it exists, else an empty layer.
    pub fn discover(path: Option<&Path>) -> Result<Layer, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None if Path::new(CONFIG_FILE).is_file() => Self::load(Path::new(CONFIG_FILE)),
            None => Ok(Layer::default()),
        }
    }

    /// Field-wise `self` over `lower`.
    pub fn over(self, lower: Layer) -> Layer {
        Layer {
            model: self.model.or(lower.model),
            headless: self.headless.or(lower.headless),
            step_budget: self.step_budget.or(lower.step_budget),
            token_budget: self.token_budget.or(lower.token_budget),
            viewport: self.viewport.or(lower.viewport),
            parallelism: self.parallelism.or(lower.parallelism),
            out_dir: self.out_dir.or(lower.out_dir),
            suite: self.suite.or(lower.suite),
            scripted: self.scripted.or(lower.scripted),
            vision: self.vision.or(lower.vision),
            browser_path: self.browser_path.or(lower.browser_path),
        }
    }

    /// Applies defaults and checks values.
    pub fn resolve(self) -> Result<Settings, ConfigError> {
        let viewport = match &self.viewport {
            Some(v) => v.parse::<Viewport>().map_err(|message| ConfigError::Invalid { key: "viewport", message })?,
            None => Viewport::default(),
        };
        let step_budget = self.step_budget.unwrap_or(50);
        if step_budget == 0 {
            return Err(ConfigError::Invalid {
                key: "step_budget",
                message: "must be at least 1".into(),
            });
        }
        if self.token_budget == Some(0) {
            return Err(ConfigError::Invalid {
                key: "token_budget",
                message: "must be positive".into(),
            });
        }
        let parallelism = self.parallelism.unwrap_or(1);
        if parallelism == 0 {
            return Err(ConfigError::Invalid {
                key: "parallelism",
                message: "must be at least 1".into(),
            });
        }
        Ok(Settings {
            model: self.model.filter(|m| !m.trim().is_empty()),
            headless: self.headless.unwrap_or(true),
            step_budget,
            token_budget: self.token_budget,
            viewport,
            parallelism,
            out_dir: self.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
            suite: self.suite,
            scripted: self.scripted,
            vision: self.vision.unwrap_or(true),
            browser_path: self.browser_path,
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub model: Option<String>,
    pub headless: bool,
    pub step_budget: u32,
    pub token_budget: Option<u64>,
    pub viewport: Viewport,
    pub parallelism: usize,
    pub out_dir: PathBuf,
    pub suite: Option<PathBuf>,
    pub scripted: Option<PathBuf>,
    pub vision: bool,
    pub browser_path: Option<PathBuf>,
}

impl Settings {
    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            headless: self.headless,
            viewport: self.viewport,
            browser_path: self.browser_path.clone(),
            ..SessionConfig::default()
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            step_budget: self.step_budget,
            token_budget: self.token_budget,
            vision_enabled: self.vision,
            ..EpisodeConfig::default()
        }
    }
}
