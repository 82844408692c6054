use std::path::PathBuf;

use regex::RegexBuilder;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{BenchError, Category, TaskSpec, Validator};
use crate::agent::{EpisodeResult, Terminal};

/// Review stub written beside the trace for human-judgment tasks.
pub const REVIEW_FILE: &str = "review.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResult {
    pub task_id: String,
    pub category: Category,
    pub model_id: String,
    pub success: bool,
    pub steps: u32,
    pub duration_s: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_tokens: u64,
    pub failure_reason: Option<String>,
    pub trace_path: Option<PathBuf>,
}

impl ScoredResult {
    /// A failed result for a task that produced no usable episode.
    pub fn failed(task: &TaskSpec, model_id: &str, reason: impl Into<String>) -> Self {
        Self {
            task_id: task.task_id.clone(),
            category: task.category,
            model_id: model_id.to_string(),
            success: false,
            steps: 0,
            duration_s: 0.0,
            input_tokens: 0,
            output_tokens: 0,
            total_tokens: 0,
            failure_reason: Some(reason.into()),
            trace_path: None,
        }
    }

    /// Copy without wall-clock and file-location fields, for comparing runs.
    pub fn comparable(&self) -> ScoredResult {
        ScoredResult {
            duration_s: 0.0,
            trace_path: None,
            ..self.clone()
        }
    }
}

/// Result of looking up a sandbox record.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordLookup {
    Found(Value),
    NotFound,
}

/// Scores an episode. `sandbox_submission` validators query their endpoint;
/// a network failure is [`BenchError::ValidatorUnreachable`], not a task failure.
pub async fn score_task(task: &TaskSpec, episode: &EpisodeResult, model_id: &str) -> Result<ScoredResult, BenchError> {
    let record = match (&task.validator, episode.terminal.is_success()) {
        (Validator::SandboxSubmission { endpoint, .. }, true) => Some(fetch_record(endpoint).await?),
        _ => None,
    };
    Ok(score_with_record(task, episode, model_id, record.as_ref()))
}

async fn fetch_record(endpoint: &str) -> Result<RecordLookup, BenchError> {
    let client = reqwest::Client::builder()
        .timeout(std::time::Duration::from_secs(10))
        .build()
        .map_err(|e| BenchError::ValidatorUnreachable(e.to_string()))?;
    let resp = client
        .get(endpoint)
        .send()
        .await
        .map_err(|e| BenchError::ValidatorUnreachable(format!("{endpoint}: {e}")))?;
    match resp.status().as_u16() {
        404 => Ok(RecordLookup::NotFound),
        s if (200..300).contains(&s) => resp
            .json::<Value>()
            .await
            .map(RecordLookup::Found)
            .map_err(|e| BenchError::ValidatorUnreachable(format!("{endpoint}: response is not JSON: {e}"))),
        s => Err(BenchError::ValidatorUnreachable(format!("{endpoint}: HTTP {s}"))),
    }
}

/// Pure scoring: the same inputs always give the same result.
pub fn score_with_record(
    task: &TaskSpec,
    episode: &EpisodeResult,
    model_id: &str,
    record: Option<&RecordLookup>,
) -> ScoredResult {
    let verdict = if !episode.terminal.is_success() {
        Err(terminal_reason(&episode.terminal, &episode.final_answer))
    } else {
        validate(&task.validator, episode, record)
    };
    if matches!(task.validator, Validator::HumanJudgment { .. }) {
        write_review_stub(task, episode);
    }
    ScoredResult {
        task_id: task.task_id.clone(),
        category: task.category,
        model_id: model_id.to_string(),
        success: verdict.is_ok(),
        steps: episode.steps.len() as u32,
        duration_s: episode.total_duration_ms as f64 / 1000.0,
        input_tokens: episode.tokens_in(),
        output_tokens: episode.tokens_out(),
        total_tokens: episode.total_tokens,
        failure_reason: verdict.err(),
        trace_path: episode.trace_path.clone(),
    }
}

fn terminal_reason(terminal: &Terminal, answer: &str) -> String {
    match terminal {
        Terminal::Success => String::new(),
        Terminal::Failure if answer.is_empty() => "agent reported failure".into(),
        Terminal::Failure => format!("agent reported failure: {answer}"),
        Terminal::StepBudgetExhausted => "step budget exhausted".into(),
        Terminal::TokenBudgetExhausted => "token budget exhausted".into(),
        Terminal::Error(detail) => format!("error: {detail}"),
    }
}

fn validate(validator: &Validator, episode: &EpisodeResult, record: Option<&RecordLookup>) -> Result<(), String> {
    let answer = format!("{}\n{}", episode.final_answer, episode.summary);
    match validator {
        Validator::AnswerContains { all_of } => {
            let lower = answer.to_lowercase();
            let missing: Vec<&str> = all_of
                .iter()
                .filter(|s| !lower.contains(&s.to_lowercase()))
                .map(String::as_str)
                .collect();
            if missing.is_empty() {
                Ok(())
            } else {
                Err(format!("answer is missing: {}", missing.join(", ")))
            }
        }
        Validator::AnswerRegex { pattern } => {
            let re = RegexBuilder::new(pattern).build().map_err(|e| e.to_string())?;
            if re.is_match(&answer) {
                Ok(())
            } else {
                Err(format!("answer does not match /{pattern}/"))
            }
        }
        Validator::UrlVisited { pattern } => {
            let re = RegexBuilder::new(pattern).build().map_err(|e| e.to_string())?;
            if episode.visited_urls().any(|u| re.is_match(u)) {
                Ok(())
            } else {
                Err(format!("no visited URL matches /{pattern}/"))
            }
        }
        Validator::SandboxSubmission { endpoint, expected_fields } => match record {
            None => Err(format!("no record fetched from {endpoint}")),
            Some(RecordLookup::NotFound) => Err(format!("no record at {endpoint}")),
            Some(RecordLookup::Found(rec)) => {
                let mut problems = Vec::new();
                for (field, expected) in expected_fields {
                    let actual = rec
                        .get("form_fields")
                        .and_then(|f| f.get(field))
                        .or_else(|| rec.get(field))
                        .map(|v| match v {
                            Value::String(s) => s.trim().to_string(),
                            other => other.to_string(),
                        });
                    match actual {
                        None => problems.push(format!("field `{field}` missing")),
                        Some(a) if a != expected.trim() => {
                            problems.push(format!("field `{field}`: expected {expected:?}, got {a:?}"))
                        }
                        Some(_) => {}
                    }
                }
                if problems.is_empty() {
                    Ok(())
                } else {
                    Err(problems.join("; "))
                }
            }
        },
        Validator::HumanJudgment { .. } => Err("requires human judgment".into()),
    }
}

fn write_review_stub(task: &TaskSpec, episode: &EpisodeResult) {
    let Some(dir) = episode.trace_path.as_ref().and_then(|p| p.parent()) else { return };
    let Validator::HumanJudgment { rubric } = &task.validator else { return };
    let body = format!(
        "# Review {}\n\nQuery: {}\n\nRubric: {}\n\nTerminal: {}\n\nFinal answer:\n\n{}\n\nSummary:\n\n{}\n\nVerdict (pass/fail):\n",
        task.task_id, task.query, rubric, episode.terminal, episode.final_answer, episode.summary
    );
    if let Err(e) = std::fs::write(dir.join(REVIEW_FILE), body) {
        tracing::warn!("writing the review stub for {} failed: {e}", task.task_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{parse_tasks, Stage};
    use std::collections::BTreeMap;

    fn task(validator: Validator) -> TaskSpec {
        TaskSpec {
            task_id: "S3-OFC-01".into(),
            stage: Stage::ActionTaking,
            category: Category::FormCompletion,
            query: "fill the form".into(),
            start_url: None,
            validator,
            timeout_s: 900,
            expected_pass: true,
        }
    }

    fn episode(terminal: Terminal, answer: &str) -> EpisodeResult {
        EpisodeResult {
            query: "q".into(),
            plan: None,
            steps: vec![],
            terminal,
            final_answer: answer.into(),
            summary: String::new(),
            total_duration_ms: 1500,
            total_tokens: 0,
            trace_path: None,
        }
    }

    const ANSWER: &str = "Form submitted successfully. Your confirmation number is 123-456.";

    #[test]
    fn answer_contains_confirmation() {
        let t = task(Validator::AnswerContains { all_of: vec!["123-456".into()] });
        let r = score_with_record(&t, &episode(Terminal::Success, ANSWER), "m", None);
        assert!(r.success && r.failure_reason.is_none());
        assert_eq!(r.duration_s, 1.5);
    }

    #[test]
    fn budget_exhaustion_fails() {
        let t = task(Validator::AnswerContains { all_of: vec!["x".into()] });
        let r = score_with_record(&t, &episode(Terminal::StepBudgetExhausted, ""), "m", None);
        assert!(!r.success);
        assert_eq!(r.failure_reason.as_deref(), Some("step budget exhausted"));
    }

    #[test]
    fn sandbox_mismatch_names_the_field() {
        let t = task(Validator::SandboxSubmission {
            endpoint: "http://x/api/submissions/latest".into(),
            expected_fields: BTreeMap::from([("postal_code".to_string(), "H3A0G4".to_string())]),
        });
        let rec = RecordLookup::Found(serde_json::json!({"submission_id": "123-456", "form_fields": {"postal_code": "H3A0G5"}}));
        let r = score_with_record(&t, &episode(Terminal::Success, ANSWER), "m", Some(&rec));
        assert!(!r.success);
        assert!(r.failure_reason.unwrap().contains("postal_code"));
        let rec = RecordLookup::Found(serde_json::json!({"form_fields": {"postal_code": "H3A0G4"}}));
        assert!(score_with_record(&t, &episode(Terminal::Success, ANSWER), "m", Some(&rec)).success);
        let r = score_with_record(&t, &episode(Terminal::Success, ANSWER), "m", Some(&RecordLookup::NotFound));
        assert!(!r.success);
    }

    #[test]
    fn human_judgment_never_passes() {
        let t = task(Validator::HumanJudgment { rubric: "r".into() });
        let r = score_with_record(&t, &episode(Terminal::Success, ANSWER), "m", None);
        assert_eq!(r.failure_reason.as_deref(), Some("requires human judgment"));
    }

    #[tokio::test]
    async fn unreachable_endpoint_is_distinct() {
        let t = task(Validator::SandboxSubmission {
            endpoint: "http://127.0.0.1:9/api/submissions/latest".into(),
            expected_fields: BTreeMap::from([("a".to_string(), "b".to_string())]),
        });
        let err = score_task(&t, &episode(Terminal::Success, ANSWER), "m").await.unwrap_err();
        assert!(matches!(err, BenchError::ValidatorUnreachable(_)));
        let _ = parse_tasks;
    }
}
