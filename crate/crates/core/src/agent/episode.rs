use std::time::Instant;

use tracing::{info, warn};

use super::decide::{decide_next, DecideFailure};
use super::memory::update_memory;
use super::plan::plan_with_usage;
use super::prompt::{prompt_hash, PROMPT_VERSION};
use super::summary::summarize_with_usage;
use super::trace::{write_trace, Trace, TraceEnd, TraceHeader, TRACE_FILE};
use super::{AgentError, EpisodeConfig, EpisodeResult, StepRecord, Terminal};
use crate::browser::{Action, ActionOutcome, PageDriver};
use crate::dom::{ElementRegistry, ScrollOffset};
use crate::llm::{AgentDecision, LlmBackend};

/// Runs one episode to a terminal state.
///
/// Task-level problems (bad model output, browser failures, exhausted
/// budgets) end up in [`EpisodeResult::terminal`]; only an invalid query
/// or config and trace I/O failures are returned as errors.
///
/// Planning and summary tokens are booked on the first and last step so
/// that `total_tokens` is both the per-step sum and the sum over all model calls.
pub async fn run_task(
    query: &str,
    driver: &dyn PageDriver,
    backend: &dyn LlmBackend,
    config: &EpisodeConfig,
) -> Result<EpisodeResult, AgentError> {
    config.validate()?;
    let query = query.trim();
    if query.is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let started = Instant::now();
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut carry = (0u64, 0u64);
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut terminal: Option<Terminal> = None;
    let mut final_answer = String::new();

    let plan = match plan_with_usage(backend, query, &mut carry).await {
        Ok(plan) => Some(plan),
        Err(e) => {
            terminal = Some(Terminal::Error(e.to_string()));
            None
        }
    };

    if let (Some(url), None) = (&config.start_url, &terminal) {
        let empty = ElementRegistry {
            snapshot_ref: String::new(),
            scroll_offset: ScrollOffset::default(),
            elements: Vec::new(),
        };
        let nav = driver.execute(&Action::Navigate { url: url.clone() }, &empty).await;
        if let Err(e) = nav {
            terminal = Some(Terminal::Error(format!("opening the start page failed: {e}")));
        }
    }

    let mut memory = String::new();
    if let Some(plan) = &plan {
        for step_index in 1..=config.step_budget {
            if terminal.is_some() {
                break;
            }
            let step_started = Instant::now();
            let state = match driver.capture_state().await {
                Ok(s) => s,
                Err(e) => {
                    terminal = Some(Terminal::Error(format!("capturing the page failed: {e}")));
                    break;
                }
            };
            save_screenshot(config, step_index, &state.screenshot);
            let page_url = state.snapshot.url.clone();

            let (decision, tokens_in, tokens_out) =
                match decide_next(backend, plan, &memory, &state, &steps, config).await {
                    Ok(d) => (d.decision, d.tokens_in, d.tokens_out),
                    Err(DecideFailure { error, tokens_in, tokens_out }) => {
                        terminal = Some(Terminal::Error(error.to_string()));
                        let mut record = StepRecord {
                            step_index,
                            page_url,
                            decision: AgentDecision::new(Vec::new()),
                            outcomes: Vec::new(),
                            tokens_in: tokens_in + carry.0,
                            tokens_out: tokens_out + carry.1,
                            duration_ms: 0,
                        };
                        carry = (0, 0);
                        record.duration_ms = step_started.elapsed().as_millis() as u64;
                        steps.push(record);
                        break;
                    }
                };

            let mut outcomes: Vec<ActionOutcome> = Vec::new();
            for action in &decision.actions {
                match driver.execute(action, &state.registry).await {
                    Ok(outcome) => {
                        let ok = outcome.success;
                        outcomes.push(outcome);
                        if let (true, Action::Done { success, answer }) = (ok, action) {
                            final_answer = answer.clone();
                            terminal = Some(if *success { Terminal::Success } else { Terminal::Failure });
                        }
                        if !ok {
                            break;
                        }
                    }
                    Err(e) => {
                        outcomes.push(ActionOutcome::failed(action.clone(), e.to_string()));
                        if !e.is_recoverable() {
                            terminal = Some(Terminal::Error(e.to_string()));
                        }
                        break;
                    }
                }
            }
            memory = update_memory(&memory, &decision, &outcomes);

            let record = StepRecord {
                step_index,
                page_url,
                decision,
                outcomes,
                tokens_in: tokens_in + carry.0,
                tokens_out: tokens_out + carry.1,
                duration_ms: step_started.elapsed().as_millis() as u64,
            };
            carry = (0, 0);
            info!(
                step = step_index,
                url = %record.page_url,
                actions = %record.decision.actions.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "),
                "step done"
            );
            steps.push(record);

            if terminal.is_none() {
                if let Some(budget) = config.token_budget {
                    let used: u64 = steps.iter().map(StepRecord::tokens).sum();
                    if used >= budget {
                        terminal = Some(Terminal::TokenBudgetExhausted);
                    }
                }
            }
        }
    }
    let terminal = terminal.unwrap_or(Terminal::StepBudgetExhausted);

    let mut result = EpisodeResult {
        query: query.to_string(),
        plan,
        steps,
        terminal,
        final_answer,
        summary: String::new(),
        total_duration_ms: 0,
        total_tokens: 0,
        trace_path: None,
    };
    let (summary, s_in, s_out) = summarize_with_usage(backend, &result).await;
    result.summary = summary;
    carry.0 += s_in;
    carry.1 += s_out;
    if carry != (0, 0) {
        match result.steps.last_mut() {
            Some(last) => {
                last.tokens_in += carry.0;
                last.tokens_out += carry.1;
            }
            None => result.steps.push(StepRecord {
                step_index: 1,
                page_url: String::new(),
                decision: AgentDecision::new(Vec::new()),
                outcomes: Vec::new(),
                tokens_in: carry.0,
                tokens_out: carry.1,
                duration_ms: 0,
            }),
        }
    }
    result.total_tokens = result.steps.iter().map(StepRecord::tokens).sum();
    result.total_duration_ms = started.elapsed().as_millis() as u64;

    if let Some(dir) = &config.trace_dir {
        std::fs::create_dir_all(dir).map_err(|source| super::TraceError::Io { path: dir.clone(), source })?;
        let path = dir.join(TRACE_FILE);
        let trace = Trace {
            header: TraceHeader {
                query: result.query.clone(),
                model_id: backend.model_id().to_string(),
                prompt_version: PROMPT_VERSION.to_string(),
                prompt_hash: prompt_hash(),
                config: config.clone(),
                plan: result.plan.clone(),
                started_at,
            },
            steps: result.steps.clone(),
            end: TraceEnd {
                terminal: result.terminal.clone(),
                final_answer: result.final_answer.clone(),
                summary: result.summary.clone(),
                total_tokens: result.total_tokens,
                total_duration_ms: result.total_duration_ms,
            },
        };
        write_trace(&path, &trace)?;
        result.trace_path = Some(path);
    }
    info!(terminal = %result.terminal, steps = result.steps.len(), tokens = result.total_tokens, "episode finished");
    Ok(result)
}

fn save_screenshot(config: &EpisodeConfig, step: u32, png: &[u8]) {
    let Some(dir) = &config.trace_dir else { return };
    if png.is_empty() {
        return;
    }
    let written = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(dir.join(format!("step_{step}.png")), png));
    if let Err(e) = written {
        warn!("saving the step {step} screenshot failed: {e}");
    }
}
