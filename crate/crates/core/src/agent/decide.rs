use super::plan::Plan;
use super::prompt::SYSTEM_PROMPT;
use super::{AgentError, EpisodeConfig, StepRecord};
use crate::browser::PageState;
use crate::dom::{serialize_for_llm, MIN_SERIALIZATION_BUDGET};
use crate::llm::{complete, parse_agent_decision, AgentDecision, LlmBackend, LlmError, LlmRequest, Turn};

/// Number of recent steps summarized in each prompt.
pub const HISTORY_TAIL: usize = 4;
/// Re-prompts allowed per step when the reply is not a usable decision.
pub const MAX_PARSE_RETRIES: usize = 2;
const MAX_OVERFLOW_SHRINKS: usize = 3;
const MAX_OUTCOME_CHARS: usize = 600;

/// A decision together with what it cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Decided {
    pub decision: AgentDecision,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// The request of the final attempt, kept for inspection.
    pub request: LlmRequest,
}

/// A failed decision and the tokens its attempts consumed.
#[derive(Debug)]
pub struct DecideFailure {
    pub error: AgentError,
    pub tokens_in: u64,
    pub tokens_out: u64,
}

impl DecideFailure {
    fn new(error: AgentError, tokens: (u64, u64)) -> Self {
        Self { error, tokens_in: tokens.0, tokens_out: tokens.1 }
    }
}

/// Composes the step prompt and asks the model for the next decision.
///
/// Unusable replies are re-prompted with the error up to
/// [`MAX_PARSE_RETRIES`] times. A context overflow halves the DOM budget
/// and retries. On failure the error carries the tokens spent so far.
pub async fn decide_next(
    backend: &dyn LlmBackend,
    plan: &Plan,
    memory: &str,
    state: &PageState,
    history_tail: &[StepRecord],
    config: &EpisodeConfig,
) -> Result<Decided, DecideFailure> {
    let mut tokens = (0u64, 0u64);
    let mut budget = config.serialization_budget;
    let mut shrinks = 0;
    let mut retries = 0;
    let mut followups: Vec<Turn> = Vec::new();
    loop {
        let page = serialize_for_llm(&state.registry, &state.snapshot, budget).map_err(|e| DecideFailure::new(AgentError::Browser(e.into()), tokens))?;
        let mut first = Turn::user(step_prompt(plan, memory, state, history_tail, &page));
        if config.vision_enabled && !state.screenshot.is_empty() {
            first = first.with_image(state.screenshot.clone());
        }
        let mut turns = vec![first];
        turns.extend(followups.iter().cloned());
        let request = LlmRequest::new(SYSTEM_PROMPT, turns);
        let reply = match complete(backend, &request).await {
            Ok(r) => r,
            Err(LlmError::ContextOverflow(_)) if shrinks < MAX_OVERFLOW_SHRINKS && budget > MIN_SERIALIZATION_BUDGET => {
                shrinks += 1;
                budget = (budget / 2).max(MIN_SERIALIZATION_BUDGET);
                continue;
            }
            Err(e) => return Err(DecideFailure::new(e.into(), tokens)),
        };
        tokens.0 += reply.input_tokens;
        tokens.1 += reply.output_tokens;
        match parse_agent_decision(&reply.text) {
            Ok(decision) => {
                return Ok(Decided {
                    decision,
                    tokens_in: tokens.0,
                    tokens_out: tokens.1,
                    request,
                })
            }
            Err(e) if retries < MAX_PARSE_RETRIES => {
                retries += 1;
                followups.push(Turn::assistant(reply.text));
                followups.push(Turn::user(format!(
                    "Your reply could not be used: {e}. Reply again with exactly one JSON object with the keys evaluation, memory, next_goal and actions."
                )));
            }
            Err(e) => return Err(DecideFailure::new(AgentError::UnparseableDecision(e.to_string()), tokens)),
        }
    }
}

fn step_prompt(plan: &Plan, memory: &str, state: &PageState, history: &[StepRecord], page: &str) -> String {
    let mut out = String::new();
    out.push_str("# User query\n");
    out.push_str(&plan.user_query);
    out.push_str("\n\n# Plan\n");
    out.push_str(&plan.render());
    out.push_str("\n\n# Memory\n");
    out.push_str(if memory.trim().is_empty() { "(empty)" } else { memory });
    out.push_str("\n\n# Recent steps\n");
    if history.is_empty() {
        out.push_str("(none yet)\n");
    }
    let start = history.len().saturating_sub(HISTORY_TAIL);
    for step in &history[start..] {
        out.push_str(&step_digest(step));
        out.push('\n');
    }
    if state.open_tabs.len() > 1 {
        out.push_str("\n# Open tabs\n");
        for tab in &state.open_tabs {
            let marker = if tab.tab_id == state.tab_id { " (current)" } else { "" };
            out.push_str(&format!("- {}{marker}: {} {}\n", tab.tab_id, tab.title, tab.url));
        }
    }
    out.push_str("\n# Current page\n");
    out.push_str(page);
    out
}

fn step_digest(step: &StepRecord) -> String {
    let mut line = format!("Step {} on {}", step.step_index, step.page_url);
    if !step.decision.next_goal.is_empty() {
        line.push_str(&format!(" | goal: {}", step.decision.next_goal));
    }
    for o in &step.outcomes {
        let mut msg: String = o.message.chars().take(MAX_OUTCOME_CHARS).collect();
        if msg.len() < o.message.len() {
            msg.push('…');
        }
        let status = if o.success { "ok" } else { "FAILED" };
        line.push_str(&format!(" | {} -> {status}: {msg}", o.action));
    }
    let skipped = step.decision.actions.len().saturating_sub(step.outcomes.len());
    if skipped > 0 {
        line.push_str(&format!(" | {skipped} action(s) skipped"));
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::{Action, ActionOutcome};
    use crate::dom::{extract_interactive_elements, parse_snapshot, ScrollOffset, Viewport};
    use crate::llm::ScriptedBackend;

    fn state(html: &str) -> PageState {
        let snapshot = parse_snapshot(html, "http://fixtures.local/p.html", Viewport::default(), ScrollOffset::default()).unwrap();
        let registry = extract_interactive_elements(&snapshot);
        PageState {
            snapshot,
            registry,
            screenshot: vec![1, 2, 3],
            tab_id: "t".into(),
            open_tabs: vec![],
        }
    }

    fn plan() -> Plan {
        Plan {
            user_query: "q".into(),
            parsed_intent: String::new(),
            steps: vec!["s".into()],
            constraints: vec![],
        }
    }

    const PAGE: &str = r#"<html><body><a href="/a" data-wa-rect="0 0 50 20">Home</a><a href="/c" data-wa-rect="0 30 50 20">Contact</a></body></html>"#;

    #[tokio::test]
    async fn scripted_click_passes_through() {
        let s = state(PAGE);
        let idx = s.registry.iter().find(|e| e.text == "Contact").unwrap().index;
        let b = ScriptedBackend::from_replies([format!(r#"{{"actions":[{{"name":"click","index":{idx}}}]}}"#)]);
        let d = decide_next(&b, &plan(), "", &s, &[], &EpisodeConfig::default()).await.unwrap();
        assert_eq!(d.decision.actions, vec![Action::Click { index: idx as i64 }]);
        assert!(d.request.has_image());
    }

    #[tokio::test]
    async fn vision_off_sends_no_image() {
        let b = ScriptedBackend::from_replies([r#"{"actions":[{"name":"go_back"}]}"#]);
        let cfg = EpisodeConfig { vision_enabled: false, ..Default::default() };
        let d = decide_next(&b, &plan(), "", &state(PAGE), &[], &cfg).await.unwrap();
        assert!(!d.request.has_image());
    }

    #[tokio::test]
    async fn parse_retries_are_bounded_and_tokens_kept() {
        let b = ScriptedBackend::from_jsonl(
            "{\"text\":\"x\",\"input_tokens\":5,\"output_tokens\":1}\n{\"text\":\"y\",\"input_tokens\":5,\"output_tokens\":1}\n{\"text\":\"z\",\"input_tokens\":5,\"output_tokens\":1}\n",
        )
        .unwrap();
        let err = decide_next(&b, &plan(), "", &state(PAGE), &[], &EpisodeConfig::default()).await.unwrap_err();
        assert!(matches!(err.error, AgentError::UnparseableDecision(_)));
        assert_eq!((err.tokens_in, err.tokens_out), (15, 3));

        let b = ScriptedBackend::from_replies(["nothing", r#"{"actions":[{"name":"go_back"}]}"#]);
        let d = decide_next(&b, &plan(), "", &state(PAGE), &[], &EpisodeConfig::default()).await.unwrap();
        assert_eq!(d.request.turns.len(), 3);
    }

    #[tokio::test]
    async fn oversized_page_ends_with_trailer() {
        let mut html = String::from("<html><body>");
        for i in 0..400 {
            html.push_str(&format!(r#"<a href="/p{i}" data-wa-rect="0 {} 300 20">Link number {i} with a long label</a>"#, i * 22));
        }
        html.push_str("</body></html>");
        let b = ScriptedBackend::from_replies([r#"{"actions":[{"name":"go_back"}]}"#]);
        let cfg = EpisodeConfig { serialization_budget: 2000, ..Default::default() };
        let d = decide_next(&b, &plan(), "", &state(&html), &[], &cfg).await.unwrap();
        let text = &d.request.turns[0].text;
        assert!(text.trim_end().ends_with("more elements truncated"), "{}", &text[text.len() - 200..]);
    }

    #[test]
    fn history_keeps_last_four() {
        let steps: Vec<StepRecord> = (1..=6)
            .map(|i| StepRecord {
                step_index: i,
                page_url: format!("http://x/{i}"),
                decision: AgentDecision::new(vec![Action::Click { index: 99 }]),
                outcomes: vec![ActionOutcome::failed(Action::Click { index: 99 }, "unknown element index 99")],
                tokens_in: 0,
                tokens_out: 0,
                duration_ms: 0,
            })
            .collect();
        let p = step_prompt(&plan(), "", &state(PAGE), &steps, "page");
        assert!(!p.contains("Step 2 on"));
        assert!(p.contains("Step 3 on") && p.contains("Step 6 on"));
        assert!(p.contains("click(99) -> FAILED: unknown element index 99"));
    }
}
