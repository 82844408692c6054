use crate::browser::ActionOutcome;
use crate::llm::AgentDecision;

pub const MAX_MEMORY_CHARS: usize = 4000;

/// Memory for the next step: the decision's memory (or the previous one
/// when the model left it empty), plus one line per failed outcome,
/// capped at [`MAX_MEMORY_CHARS`] keeping the most recent text.
pub fn update_memory(memory: &str, decision: &AgentDecision, outcomes: &[ActionOutcome]) -> String {
    let mut next = if decision.memory.trim().is_empty() {
        memory.to_string()
    } else {
        decision.memory.clone()
    };
    for failed in outcomes.iter().filter(|o| !o.success) {
        if !next.is_empty() {
            next.push('\n');
        }
        let message = failed.message.replace('\n', " ");
        next.push_str(&format!("[failed] {}: {message}", failed.action));
    }
    keep_tail(next, MAX_MEMORY_CHARS)
}

fn keep_tail(text: String, max: usize) -> String {
    let count = text.chars().count();
    if count <= max {
        return text;
    }
    text.chars().skip(count - max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::browser::Action;

    fn decision(memory: &str) -> AgentDecision {
        AgentDecision {
            memory: memory.into(),
            ..AgentDecision::new(vec![Action::Click { index: 99 }])
        }
    }

    #[test]
    fn success_leaves_decision_memory() {
        let ok = ActionOutcome::ok(Action::Click { index: 1 }, "clicked");
        assert_eq!(update_memory("old", &decision("new facts"), &[ok]), "new facts");
    }

    #[test]
    fn failure_is_appended() {
        let bad = ActionOutcome::failed(Action::Click { index: 99 }, "unknown element index 99");
        let m = update_memory("", &decision("m"), &[bad]);
        assert!(m.lines().last().unwrap().contains("unknown element index 99"));
    }

    #[test]
    fn long_memory_keeps_tail() {
        let long: String = (0..10_000).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let m = update_memory("", &decision(&long), &[]);
        assert_eq!(m.chars().count(), 4000);
        assert_eq!(m, long[6000..]);
    }
}
