//! Command-line front end: `run`, `bench`, `replay` and `fixtures`.
//!
//! Exit codes: 0 success, 1 configuration or infrastructure error, 2 task failure.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use webagent::agent::{read_trace, run_task, Terminal};
use webagent::bench::{
    aggregate, default_suite, emit_report, live_suite, load_tasks, render_markdown, run_suite, BackendFactory, BrowserPool,
    ScriptDir, SharedBackend, SuiteOptions, TaskSuite, FIXTURES_PLACEHOLDER,
};
use webagent::browser::open_session;
use webagent::config::{Layer, Settings};
use webagent::fixtures::FixtureServer;
use webagent::llm::{HttpBackend, HttpConfig, LlmBackend, ScriptedBackend, MODEL_ENV};

#[derive(Parser)]
#[command(name = "webagent", version, about = "Browser agent for legal information and online procedures")]
struct Cli {
    /// Settings file; defaults to ./webagent.toml when present. Flags and WEBAGENT_* variables take precedence.
    #[arg(long, global = true, env = "WEBAGENT_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one query and print the answer, the summary and the trace path.
    Run(RunArgs),
    /// Run a task suite and write report.md and heatmap.csv.
    Bench(BenchArgs),
    /// Print a step-by-step digest of a trace file.
    Replay {
        /// Path to a trace.jsonl file.
        trace: PathBuf,
    },
    /// Serve the bundled fixture site until interrupted.
    Fixtures {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// 0 picks a free port.
        #[arg(long, default_value_t = 8000)]
        port: u16,
    },
}

#[derive(Args)]
struct Common {
    /// Model id for the LLM endpoint; names the results directory.
    #[arg(long, env = MODEL_ENV)]
    model: Option<String>,
    /// Run the browser without a window (default).
    #[arg(long, conflicts_with = "headed")]
    headless: bool,
    /// Show the browser window. Also settable with WEBAGENT_HEADLESS=false.
    #[arg(long)]
    headed: bool,
    /// Maximum perceive/decide/act iterations per episode.
    #[arg(long, env = "WEBAGENT_STEP_BUDGET")]
    step_budget: Option<u32>,
    /// Maximum input plus output tokens per episode.
    #[arg(long, env = "WEBAGENT_TOKEN_BUDGET")]
    token_budget: Option<u64>,
    /// Browser viewport as WIDTHxHEIGHT, e.g. 1280x720.
    #[arg(long, env = "WEBAGENT_VIEWPORT", value_name = "WxH")]
    viewport: Option<String>,
    /// Directory for traces and reports (default: results).
    #[arg(long, env = "WEBAGENT_OUT_DIR", value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Send page text only, without screenshots.
    #[arg(long)]
    no_vision: bool,
    /// Browser executable; also WEBAGENT_BROWSER_PATH.
    #[arg(long, value_name = "PATH")]
    browser_path: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    query: String,
    /// Page to open first. `{fixtures}` starts the bundled fixture site and points at it.
    #[arg(long, value_name = "URL")]
    start_url: Option<String>,
    /// Replay model replies from a JSONL script instead of calling an LLM.
    #[arg(long, env = "WEBAGENT_SCRIPTED", value_name = "FILE")]
    scripted: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite file (JSON array of tasks); defaults to the bundled suite.
    #[arg(long, env = "WEBAGENT_SUITE", value_name = "FILE", conflicts_with = "live")]
    suite: Option<PathBuf>,
    /// Use the bundled live-web suite instead of the fixture suite.
    #[arg(long)]
    live: bool,
    /// Replay scripts from DIR/<task_id>.jsonl; without DIR (or with `builtin`), the bundled scripts.
    #[arg(long, env = "WEBAGENT_SCRIPTED", value_name = "DIR", num_args = 0..=1, default_missing_value = BUILTIN_SCRIPTS)]
    scripted: Option<PathBuf>,
    /// Tasks run concurrently, one browser context each.
    #[arg(long, env = "WEBAGENT_PARALLELISM")]
    parallelism: Option<usize>,
    #[command(flatten)]
    common: Common,
}

const BUILTIN_SCRIPTS: &str = "builtin";

enum Failure {
    Config(String),
    Task,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Task) => ExitCode::from(2),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

async fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(args) => {
            let layer = Layer {
                scripted: args.scripted.clone(),
                ..common_layer(&args.common)?
            };
            cmd_run(&args, settings(layer, cli.config.as_deref())?).await
        }
        Command::Bench(args) => {
            let layer = Layer {
                suite: args.suite.clone(),
                scripted: args.scripted.clone(),
                parallelism: args.parallelism,
                ..common_layer(&args.common)?
            };
            cmd_bench(&args, settings(layer, cli.config.as_deref())?).await
        }
        Command::Replay { trace } => {
            let trace = read_trace(&trace)?;
            print!("{}", trace.digest());
            Ok(())
        }
        Command::Fixtures { host, port } => {
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            let server = FixtureServer::start(addr).await?;
            println!("Serving fixture site at {}/index.html (Ctrl-C to stop)", server.base_url());
            tokio::signal::ctrl_c().await?;
            server.shutdown();
            Ok(())
        }
    }
}

fn common_layer(c: &Common) -> Result<Layer, Failure> {
    let headless = if c.headed {
        Some(false)
    } else if c.headless {
        Some(true)
    } else {
        match std::env::var("WEBAGENT_HEADLESS") {
            Ok(v) => Some(v.parse::<bool>().map_err(|_| format!("WEBAGENT_HEADLESS must be true or false, got {v:?}"))?),
            Err(_) => None,
        }
    };
    Ok(Layer {
        model: c.model.clone(),
        headless,
        step_budget: c.step_budget,
        token_budget: c.token_budget,
        viewport: c.viewport.clone(),
        out_dir: c.out_dir.clone(),
        vision: c.no_vision.then_some(false),
        browser_path: c.browser_path.clone(),
        ..Layer::default()
    })
}

fn settings(upper: Layer, config: Option<&Path>) -> Result<Settings, Failure> {
    Ok(upper.over(Layer::discover(config)?).resolve()?)
}

fn http_backend(model: Option<&str>) -> Result<HttpBackend, Failure> {
    let config = HttpConfig::from_lookup(|k| match (k, model) {
        (MODEL_ENV, Some(m)) => Some(m.to_string()),
        _ => std::env::var(k).ok(),
    })?;
    Ok(HttpBackend::new(config)?)
}

fn dir_name(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

async fn cmd_run(args: &RunArgs, settings: Settings) -> Result<(), Failure> {
    let backend: Box<dyn LlmBackend> = match &settings.scripted {
        Some(path) => Box::new(
            ScriptedBackend::from_file(path)?.with_model_id(settings.model.clone().unwrap_or_else(|| "scripted".into())),
        ),
        None => Box::new(http_backend(settings.model.as_deref())?),
    };

    let server = match &args.start_url {
        Some(u) if u.contains(FIXTURES_PLACEHOLDER) => Some(FixtureServer::start_local().await?),
        _ => None,
    };
    let mut episode = settings.episode_config();
    episode.start_url = args
        .start_url
        .as_ref()
        .map(|u| u.replace(FIXTURES_PLACEHOLDER, &server.as_ref().map(|s| s.base_url()).unwrap_or_default()));
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    episode.trace_dir = Some(settings.out_dir.join(dir_name(backend.model_id())).join(format!("run-{stamp}")));

    let session = open_session(settings.session_config()).await?;
    let result = run_task(&args.query, &session, backend.as_ref(), &episode).await;
    session.close().await;
    if let Some(s) = server {
        s.shutdown();
    }
    let result = result?;

    println!("status: {}", result.terminal);
    if !result.final_answer.is_empty() {
        println!("answer: {}", result.final_answer);
    }
    println!("summary: {}", result.summary);
    println!(
        "steps: {}, tokens: {} (in {}, out {}), duration: {:.1} s",
        result.steps.len(),
        result.total_tokens,
        result.tokens_in(),
        result.tokens_out(),
        result.total_duration_ms as f64 / 1000.0
    );
    if let Some(p) = &result.trace_path {
        println!("trace: {}", p.display());
    }
    match result.terminal {
        Terminal::Success => Ok(()),
        Terminal::Error(_) => Err(Failure::Config(result.terminal.to_string())),
        _ => Err(Failure::Task),
    }
}

async fn cmd_bench(args: &BenchArgs, settings: Settings) -> Result<(), Failure> {
    let suite: TaskSuite = match (&settings.suite, args.live) {
        (_, true) => live_suite(),
        (Some(path), false) => load_tasks(path)?,
        (None, false) => default_suite(),
    };
    let backends: Box<dyn BackendFactory> = match &settings.scripted {
        Some(dir) => {
            let model = settings.model.clone().unwrap_or_else(|| "scripted".into());
            if dir.as_os_str() == BUILTIN_SCRIPTS {
                Box::new(ScriptDir::embedded(model))
            } else if dir.is_dir() {
                Box::new(ScriptDir::new(dir, model))
            } else {
                return Err(Failure::Config(format!("script directory {} does not exist", dir.display())));
            }
        }
        None => Box::new(SharedBackend(Arc::new(http_backend(settings.model.as_deref())?))),
    };
    let model_id = backends.model_id();

    let pool = BrowserPool::start(settings.session_config()).await?;
    let options = SuiteOptions {
        episode: settings.episode_config(),
        parallelism: settings.parallelism,
        out_dir: Some(settings.out_dir.clone()),
    };
    let results = run_suite(&suite, &pool, backends.as_ref(), &options).await;
    pool.close().await;

    let model_dir = settings.out_dir.join(dir_name(&model_id));
    std::fs::create_dir_all(&model_dir)?;
    std::fs::write(model_dir.join("results.json"), serde_json::to_string_pretty(&results)?)?;
    let report = aggregate(&results, &model_id)?;
    let files = emit_report(std::slice::from_ref(&report), &settings.out_dir)?;

    for r in &results {
        let verdict = if r.success { "pass" } else { "FAIL" };
        let reason = r.failure_reason.as_deref().unwrap_or("");
        println!("{:<10} {verdict}  {:>2} steps  {:>7} tokens  {reason}", r.task_id, r.steps, r.total_tokens);
    }
    println!();
    print!("{}", render_markdown(&[report])?);
    println!("\nreport: {}\nheatmap: {}", files.markdown.display(), files.heatmap.display());

    let unexpected = suite
        .tasks
        .iter()
        .zip(&results)
        .filter(|(t, r)| t.expected_pass && t.validator.is_automated() && !r.success)
        .count();
    if unexpected > 0 {
        eprintln!("{unexpected} expected-pass task(s) failed");
        return Err(Failure::Task);
    }
    Ok(())
}
