use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;
use crate::browser::Action;

/// Most actions a single decision may batch.
pub const MAX_ACTIONS: usize = 3;

/// What the model decided at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    /// Appraisal of the previous step's outcome.
    pub evaluation: String,
    /// Running memory carried to the next step.
    pub memory: String,
    pub next_goal: String,
    pub actions: Vec<Action>,
}

impl AgentDecision {
    pub fn new(actions: Vec<Action>) -> Self {
        Self {
            evaluation: String::new(),
            memory: String::new(),
            next_goal: String::new(),
            actions,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.actions.is_empty() {
            return Err(LlmError::InvalidAction("a decision needs at least one action".into()));
        }
        if self.actions.len() > MAX_ACTIONS {
            return Err(LlmError::InvalidAction(format!(
                "at most {MAX_ACTIONS} actions per decision, got {}",
                self.actions.len()
            )));
        }
        if self.actions.len() > 1 && self.actions.iter().any(Action::is_done) {
            return Err(LlmError::InvalidAction("done must be the only action of its decision".into()));
        }
        for (i, a) in self.actions.iter().enumerate() {
            a.validate()
                .map_err(|e| LlmError::InvalidAction(format!("action {}: {e}", i + 1)))?;
        }
        Ok(())
    }
}

/// Renders a decision in the wire format [`parse_agent_decision`] reads.
pub fn render_decision(decision: &AgentDecision) -> String {
    serde_json::to_string_pretty(decision).expect("decisions serialize")
}

const MAX_CANDIDATES: usize = 256;

/// Finds the first JSON object carrying an `actions` key anywhere in `raw`
/// (prose and code fences around it are ignored) and validates it.
pub fn parse_agent_decision(raw: &str) -> Result<AgentDecision, LlmError> {
    let object = find_decision_object(raw).ok_or(LlmError::UnparseableDecision)?;
    decode(object)
}

fn find_decision_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    raw.char_indices()
        .filter(|&(_, c)| c == '{')
        .take(MAX_CANDIDATES)
        .find_map(|(at, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[at..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) if map.contains_key("actions") => Some(map),
                _ => None,
            }
        })
}

fn decode(mut object: serde_json::Map<String, Value>) -> Result<AgentDecision, LlmError> {
    let mut text = |key: &str| -> Result<String, LlmError> {
        match object.remove(key) {
            None | Some(Value::Null) => Ok(String::new()),
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(LlmError::InvalidAction(format!("`{key}` must be a string, got {other}"))),
        }
    };
    let evaluation = text("evaluation")?;
    let memory = text("memory")?;
    let next_goal = text("next_goal")?;
    let Some(Value::Array(items)) = object.remove("actions") else {
        return Err(LlmError::InvalidAction("`actions` must be a list".into()));
    };
    let actions = items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let name = item.get("name").and_then(Value::as_str).unwrap_or("?").to_string();
            serde_json::from_value::<Action>(item)
                .map_err(|e| LlmError::InvalidAction(format!("action {} ({name}): {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let decision = AgentDecision { evaluation, memory, next_goal, actions };
    decision.validate()?;
    Ok(decision)
}
