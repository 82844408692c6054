//! The perceive / decide / act loop.
//!
//! [`run_task`] plans once with [`formulate_plan`], then at every step
//! captures the page, asks the model for an [`AgentDecision`] through
//! [`decide_next`], executes its actions and records a [`StepRecord`],
//! until the model calls `done` or a budget runs out. The episode ends
//! with a user-facing [`summarize`] call.

mod decide;
mod episode;
mod memory;
mod plan;
mod prompt;
mod summary;
mod trace;

pub use decide::{decide_next, DecideFailure, Decided, HISTORY_TAIL, MAX_PARSE_RETRIES};
pub use episode::run_task;
pub use memory::{update_memory, MAX_MEMORY_CHARS};
pub use plan::{formulate_plan, verbatim_facts, Plan, MAX_PLAN_STEPS, MAX_PLAN_STEP_CHARS};
pub use prompt::{prompt_hash, PLANNER_PROMPT, PROMPT_VERSION, SUMMARIZER_PROMPT, SYSTEM_PROMPT};
pub use summary::{summarize, template_summary, MAX_SUMMARY_WORDS};
pub use trace::{read_trace, write_trace, Trace, TraceEnd, TraceError, TraceHeader, TRACE_FILE};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::browser::{ActionOutcome, BrowserError};
use crate::dom::MIN_SERIALIZATION_BUDGET;
use crate::llm::{AgentDecision, LlmError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("the query is empty")]
    EmptyQuery,
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("no usable plan after retries: {0}")]
    UnparseablePlan(String),
    #[error("no usable decision after retries: {0}")]
    UnparseableDecision(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Browser(#[from] BrowserError),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub step_budget: u32,
    /// Ceiling on input + output tokens for the whole episode.
    pub token_budget: Option<u64>,
    /// Characters of serialized DOM per prompt.
    pub serialization_budget: usize,
    pub start_url: Option<String>,
    pub vision_enabled: bool,
    /// Where to write `trace.jsonl` and `step_<n>.png`; nothing is written when unset.
    #[serde(skip)]
    pub trace_dir: Option<PathBuf>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            step_budget: 50,
            token_budget: None,
            serialization_budget: 20_000,
            start_url: None,
            vision_enabled: true,
            trace_dir: None,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.step_budget < 1 {
            return Err(AgentError::InvalidConfig("step_budget must be at least 1".into()));
        }
        if self.serialization_budget < MIN_SERIALIZATION_BUDGET {
            return Err(AgentError::InvalidConfig(format!(
                "serialization_budget must be at least {MIN_SERIALIZATION_BUDGET}"
            )));
        }
        if self.token_budget == Some(0) {
            return Err(AgentError::InvalidConfig("token_budget must be positive".into()));
        }
        Ok(())
    }
}

/// One perceive / decide / act iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based and contiguous.
    pub step_index: u32,
    pub page_url: String,
    /// A step whose decision could not be obtained carries an empty action list.
    pub decision: AgentDecision,
    pub outcomes: Vec<ActionOutcome>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub duration_ms: u64,
}

impl StepRecord {
    pub fn tokens(&self) -> u64 {
        self.tokens_in + self.tokens_out
    }
}

/// How an episode ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Terminal {
    Success,
    Failure,
    StepBudgetExhausted,
    TokenBudgetExhausted,
    Error(String),
}

impl Terminal {
    pub fn is_success(&self) -> bool {
        matches!(self, Terminal::Success)
    }

    pub fn status(&self) -> &'static str {
        match self {
            Terminal::Success => "success",
            Terminal::Failure => "failure",
            Terminal::StepBudgetExhausted => "step_budget_exhausted",
            Terminal::TokenBudgetExhausted => "token_budget_exhausted",
            Terminal::Error(_) => "error",
        }
    }
}

impl std::fmt::Display for Terminal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Terminal::Error(detail) => write!(f, "error ({detail})"),
            other => f.write_str(other.status()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub query: String,
    /// Absent only when planning itself failed.
    pub plan: Option<Plan>,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
    pub final_answer: String,
    pub summary: String,
    pub total_duration_ms: u64,
    pub total_tokens: u64,
    pub trace_path: Option<PathBuf>,
}

impl EpisodeResult {
    pub fn tokens_in(&self) -> u64 {
        self.steps.iter().map(|s| s.tokens_in).sum()
    }

    pub fn tokens_out(&self) -> u64 {
        self.steps.iter().map(|s| s.tokens_out).sum()
    }

    /// Every URL the episode saw: page URLs at capture time and URLs actions led to.
    pub fn visited_urls(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().flat_map(|s| {
            std::iter::once(s.page_url.as_str()).chain(s.outcomes.iter().filter_map(|o| o.new_url.as_deref()))
        })
    }
}
