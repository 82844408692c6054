use std::sync::LazyLock;

use regex::Regex;

use super::prompt::SUMMARIZER_PROMPT;
use super::{EpisodeResult, Terminal};
use crate::llm::{complete, LlmBackend, LlmRequest, Turn};

pub const MAX_SUMMARY_WORDS: usize = 200;
const SUMMARY_STEPS: usize = 5;

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Za-z0-9]+(?:[-/][A-Za-z0-9]+)*").unwrap());

/// Words that look like confirmation numbers, references or codes: at
/// least 4 characters with a digit, and either a separator, an uppercase
/// letter or digits only.
fn identifiers(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in WORD.find_iter(text) {
        let w = m.as_str();
        let looks_like_code = w.len() >= 4
            && w.chars().any(|c| c.is_ascii_digit())
            && (w.contains(['-', '/'])
                || w.chars().any(|c| c.is_ascii_uppercase())
                || w.chars().all(|c| c.is_ascii_digit()));
        if looks_like_code && !out.iter().any(|o| o == w) {
            out.push(w.to_string());
        }
    }
    out
}

/// Writes the user-facing answer. Falls back to [`template_summary`] when
/// the model fails or replies with nothing.
pub async fn summarize(backend: &dyn LlmBackend, episode: &EpisodeResult) -> String {
    summarize_with_usage(backend, episode).await.0
}

pub(crate) async fn summarize_with_usage(backend: &dyn LlmBackend, episode: &EpisodeResult) -> (String, u64, u64) {
    let request = LlmRequest::new(SUMMARIZER_PROMPT, vec![Turn::user(material(episode))]);
    match complete(backend, &request).await {
        Ok(reply) if !reply.text.trim().is_empty() => {
            (finalize(reply.text.trim(), episode), reply.input_tokens, reply.output_tokens)
        }
        Ok(reply) => (template_summary(episode), reply.input_tokens, reply.output_tokens),
        Err(_) => (template_summary(episode), 0, 0),
    }
}

fn material(episode: &EpisodeResult) -> String {
    let mut out = format!(
        "User request:\n{}\n\nSession ended with status: {}\nSteps taken: {}\n",
        episode.query,
        episode.terminal,
        episode.steps.len()
    );
    if !episode.final_answer.is_empty() {
        out.push_str(&format!("\nAgent's final answer:\n{}\n", episode.final_answer));
    }
    let start = episode.steps.len().saturating_sub(SUMMARY_STEPS);
    if start < episode.steps.len() {
        out.push_str("\nLast steps:\n");
    }
    for s in &episode.steps[start..] {
        out.push_str(&format!("- step {} on {}: {}", s.step_index, s.page_url, s.decision.next_goal));
        if let Some(failed) = s.outcomes.iter().find(|o| !o.success) {
            out.push_str(&format!(" (failed: {})", failed.message));
        }
        out.push('\n');
    }
    if let Some(last) = episode.steps.last() {
        if !last.decision.memory.is_empty() {
            out.push_str(&format!("\nAgent memory:\n{}\n", last.decision.memory));
        }
    }
    out
}

/// Caps the text at the word limit and makes sure identifiers from the
/// final answer survive verbatim.
fn finalize(text: &str, episode: &EpisodeResult) -> String {
    let missing: Vec<String> = identifiers(&episode.final_answer)
        .into_iter()
        .filter(|id| !text.contains(id.as_str()))
        .collect();
    let suffix = if missing.is_empty() {
        String::new()
    } else {
        format!("Reference: {}", missing.join(", "))
    };
    let room = MAX_SUMMARY_WORDS.saturating_sub(suffix.split_whitespace().count());
    let mut out = cap_words(text, room);
    if !suffix.is_empty() {
        out.push_str(if out.is_empty() { "" } else { "\n" });
        out.push_str(&suffix);
    }
    out
}

fn cap_words(text: &str, max: usize) -> String {
    if text.split_whitespace().count() <= max {
        return text.to_string();
    }
    let mut out = text.split_whitespace().take(max).collect::<Vec<_>>().join(" ");
    out.push('…');
    out
}

/// Deterministic summary used when no model summary is available.
pub fn template_summary(episode: &EpisodeResult) -> String {
    let steps = episode.steps.len();
    let mut out = format!(
        "Task ended with status {} after {steps} step{}.",
        episode.terminal.status(),
        if steps == 1 { "" } else { "s" }
    );
    match &episode.terminal {
        Terminal::Success => out.push_str(&format!(" Answer: {}", episode.final_answer)),
        Terminal::Error(detail) => out.push_str(&format!(" The session stopped on an error: {detail}.")),
        _ => {}
    }
    if !episode.terminal.is_success() {
        if !episode.final_answer.is_empty() {
            out.push_str(&format!(" Reported by the agent: {}", episode.final_answer));
        }
        let done: Vec<&str> = episode
            .steps
            .iter()
            .filter(|s| s.outcomes.iter().any(|o| o.success))
            .map(|s| s.decision.next_goal.as_str())
            .filter(|g| !g.is_empty())
            .collect();
        if let Some(last) = done.last() {
            out.push_str(&format!(" Last completed goal: {last}."));
        }
        out.push_str(&format!(" Not accomplished: {}", episode.query));
    }
    cap_words(&out, MAX_SUMMARY_WORDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn episode(terminal: Terminal, answer: &str) -> EpisodeResult {
        EpisodeResult {
            query: "Submit the intake form".into(),
            plan: None,
            steps: vec![],
            terminal,
            final_answer: answer.into(),
            summary: String::new(),
            total_duration_ms: 0,
            total_tokens: 0,
            trace_path: None,
        }
    }

    const ANSWER: &str = "Form submitted successfully. Your confirmation number is 123-456.";

    #[test]
    fn identifiers_in_answers() {
        assert_eq!(identifiers(ANSWER), ["123-456"]);
        assert_eq!(identifiers("Ref ABC123 and H3A0G4, room 12"), ["ABC123", "H3A0G4"]);
    }

    #[tokio::test]
    async fn scripted_text_is_used_as_is() {
        let b = ScriptedBackend::from_replies(["Your form was submitted; confirmation 123-456."]);
        let s = summarize(&b, &episode(Terminal::Success, ANSWER)).await;
        assert_eq!(s, "Your form was submitted; confirmation 123-456.");
    }

    #[tokio::test]
    async fn dropped_identifier_is_restored() {
        let b = ScriptedBackend::from_replies(["Your form was submitted."]);
        let s = summarize(&b, &episode(Terminal::Success, ANSWER)).await;
        assert!(s.contains("123-456"), "{s}");
    }

    #[tokio::test]
    async fn long_summary_is_capped() {
        let b = ScriptedBackend::from_replies(["word ".repeat(500)]);
        let s = summarize(&b, &episode(Terminal::Success, ANSWER)).await;
        assert!(s.split_whitespace().count() <= MAX_SUMMARY_WORDS);
        assert!(s.contains("123-456"));
    }

    #[tokio::test]
    async fn backend_error_falls_back_to_template() {
        let b = ScriptedBackend::from_replies(Vec::<String>::new());
        let s = summarize(&b, &episode(Terminal::StepBudgetExhausted, "")).await;
        assert!(s.starts_with("Task ended with status step_budget_exhausted"), "{s}");
        assert!(s.contains("Not accomplished"));
        let s = template_summary(&episode(Terminal::Success, ANSWER));
        assert!(s.starts_with("Task ended with status success") && s.contains("123-456"));
    }
}
