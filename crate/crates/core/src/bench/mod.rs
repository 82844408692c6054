//! Benchmark harness: task suites, scoring, aggregation and reports.
//!
//! A suite is a JSON array of [`TaskSpec`]s. [`run_suite`] runs every task
//! in a fresh browser session, [`score_task`] applies the task's
//! [`Validator`] to the episode, [`aggregate`] folds one model's results
//! into a [`ModelReport`] and [`emit_report`] writes `report.md` and
//! `heatmap.csv`.
//!
//! Suite files may use the placeholder `{fixtures}` in URLs; it is
//! replaced by the address of a fixture server started for each task.

mod report;
mod run;
mod score;
mod task;

pub use report::{aggregate, emit_report, render_heatmap_csv, render_markdown, rate_tenths, ModelReport, ReportFiles};
pub use run::{run_suite, BackendFactory, BrowserPool, DriverFactory, ScriptDir, SharedBackend, SuiteOptions};
pub use score::{score_task, score_with_record, RecordLookup, ScoredResult, REVIEW_FILE};
pub use task::{
    default_scripts, default_suite, live_suite, load_tasks, parse_tasks, Category, Stage, TaskSpec, TaskSuite, Validator,
    FIXTURES_PLACEHOLDER,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {field}: {message}")]
    Schema { path: String, field: String, message: String },
    #[error("duplicate task id {0}")]
    DuplicateTaskId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("results mix models: {0}")]
    MixedModels(String),
    #[error("validator endpoint unreachable: {0}")]
    ValidatorUnreachable(String),
}
