use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompt::PLANNER_PROMPT;
use super::AgentError;
use crate::llm::{complete, LlmBackend, LlmRequest, Turn};

pub const MAX_PLAN_STEPS: usize = 8;
pub const MAX_PLAN_STEP_CHARS: usize = 200;
const MAX_PLAN_RETRIES: usize = 2;

/// High-level navigation plan formulated once per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub user_query: String,
    pub parsed_intent: String,
    pub steps: Vec<String>,
    pub constraints: Vec<String>,
}

impl Plan {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() || self.steps.len() > MAX_PLAN_STEPS {
            return Err(format!("a plan needs 1 to {MAX_PLAN_STEPS} steps, got {}", self.steps.len()));
        }
        if let Some(s) = self.steps.iter().find(|s| s.trim().is_empty()) {
            return Err(format!("plan step {s:?} is empty"));
        }
        if let Some(s) = self.steps.iter().find(|s| s.chars().count() > MAX_PLAN_STEP_CHARS) {
            return Err(format!(
                "plan steps must be at most {MAX_PLAN_STEP_CHARS} characters; one has {}",
                s.chars().count()
            ));
        }
        Ok(())
    }

    /// Text block used in step prompts.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.parsed_intent.is_empty() {
            out.push_str(&self.parsed_intent);
            out.push('\n');
        }
        for (i, s) in self.steps.iter().enumerate() {
            out.push_str(&format!("{}. {s}\n", i + 1));
        }
        if !self.constraints.is_empty() {
            out.push_str("Constraints:\n");
            for c in &self.constraints {
                out.push_str(&format!("- {c}\n"));
            }
        }
        out.trim_end().to_string()
    }
}

static FACT_PATTERNS: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    [
        ("postal code", r"\b[ABCEGHJ-NPRSTVXY]\d[ABCEGHJ-NPRSTV-Z] ?\d[ABCEGHJ-NPRSTV-Z]\d\b"),
        ("date", r"\b\d{4}-\d{2}-\d{2}\b"),
        (
            "date",
            r"(?i)\b(?:jan|feb|mar|apr|may|jun|jul|aug|sep|sept|oct|nov|dec)[a-z]*\.? \d{1,2}(?:st|nd|rd|th)?(?:,? \d{4})?\b",
        ),
        ("phone number", r"\(?\b\d{3}\)?[ .-]\d{3}[ .-]\d{4}\b"),
        ("email", r"\b[\w.+-]+@[\w-]+\.[\w.-]+\b"),
    ]
    .into_iter()
    .map(|(kind, p)| (kind, Regex::new(p).expect("fact pattern compiles")))
    .collect()
});

/// Concrete user details in `query` that must be used verbatim, with their kind.
pub fn verbatim_facts(query: &str) -> Vec<(&'static str, String)> {
    let mut facts: Vec<(&'static str, String, usize)> = Vec::new();
    for (kind, re) in FACT_PATTERNS.iter() {
        for m in re.find_iter(query) {
            if !facts.iter().any(|(_, f, _)| f.contains(m.as_str()) || m.as_str().contains(f.as_str())) {
                facts.push((kind, m.as_str().to_string(), m.start()));
            }
        }
    }
    facts.sort_by_key(|f| f.2);
    facts.into_iter().map(|(k, f, _)| (k, f)).collect()
}

/// Region served by the first letter of a Canadian postal code.
fn postal_region(code: &str) -> Option<&'static str> {
    Some(match code.chars().next()? {
        'A' => "Newfoundland and Labrador",
        'B' => "Nova Scotia",
        'C' => "Prince Edward Island",
        'E' => "New Brunswick",
        'G' => "Eastern Quebec",
        'H' => "Montreal",
        'J' => "Western Quebec",
        'K' => "Eastern Ontario",
        'L' => "Central Ontario",
        'M' => "Toronto",
        'N' => "Southwestern Ontario",
        'P' => "Northern Ontario",
        'R' => "Manitoba",
        'S' => "Saskatchewan",
        'T' => "Alberta",
        'V' => "British Columbia",
        'X' => "Northwest Territories and Nunavut",
        'Y' => "Yukon",
        _ => return None,
    })
}

fn fact_constraint(kind: &str, fact: &str) -> String {
    match (kind, postal_region(fact)) {
        ("postal code", Some(region)) => {
            format!("The user's postal code is {fact}; focus the search on {region}.")
        }
        _ => format!("Use the user's {kind} exactly as given: {fact}"),
    }
}

/// Asks the model for a plan, re-prompting up to two times on bad output.
/// User facts the model's constraints leave out are appended verbatim.
pub async fn formulate_plan(backend: &dyn LlmBackend, query: &str) -> Result<Plan, AgentError> {
    let mut usage = (0, 0);
    plan_with_usage(backend, query, &mut usage).await
}

pub(crate) async fn plan_with_usage(
    backend: &dyn LlmBackend,
    query: &str,
    usage: &mut (u64, u64),
) -> Result<Plan, AgentError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(AgentError::EmptyQuery);
    }
    let mut turns = vec![Turn::user(format!("User request:\n{query}"))];
    let mut last_error = String::new();
    for _ in 0..=MAX_PLAN_RETRIES {
        let reply = complete(backend, &LlmRequest::new(PLANNER_PROMPT, turns.clone())).await?;
        usage.0 += reply.input_tokens;
        usage.1 += reply.output_tokens;
        match parse_plan(&reply.text, query) {
            Ok(plan) => return Ok(plan),
            Err(e) => {
                last_error = e;
                turns.push(Turn::assistant(reply.text));
                turns.push(Turn::user(format!(
                    "That reply could not be used: {last_error}. Reply again with only the JSON plan object."
                )));
            }
        }
    }
    Err(AgentError::UnparseablePlan(last_error))
}

#[derive(Deserialize)]
struct RawPlan {
    #[serde(default)]
    parsed_intent: String,
    steps: Vec<String>,
    #[serde(default)]
    constraints: Vec<String>,
}

fn parse_plan(raw: &str, query: &str) -> Result<Plan, String> {
    let object = raw
        .char_indices()
        .filter(|&(_, c)| c == '{')
        .take(256)
        .find_map(|(at, _)| {
            let mut s = serde_json::Deserializer::from_str(&raw[at..]).into_iter::<Value>();
            match s.next() {
                Some(Ok(v @ Value::Object(_))) if v.get("steps").is_some() => Some(v),
                _ => None,
            }
        })
        .ok_or_else(|| "no JSON object with a \"steps\" list found".to_string())?;
    let raw: RawPlan = serde_json::from_value(object).map_err(|e| format!("plan object is malformed: {e}"))?;
    let mut plan = Plan {
        user_query: query.to_string(),
        parsed_intent: raw.parsed_intent.trim().to_string(),
        steps: raw.steps.into_iter().map(|s| s.trim().to_string()).collect(),
        constraints: raw
            .constraints
            .into_iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
    };
    plan.validate()?;
    for (kind, fact) in verbatim_facts(query) {
        if !plan.constraints.iter().any(|c| c.contains(&fact)) {
            plan.constraints.push(fact_constraint(kind, &fact));
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    #[test]
    fn facts_are_found_verbatim() {
        let facts = verbatim_facts("Find the rental dispute department closest to H3A0G4.");
        assert_eq!(facts, vec![("postal code", "H3A0G4".to_string())]);
        let facts = verbatim_facts("Book on 2025-03-14, call 514-555-0199, lives at H2X 1Y4");
        let values: Vec<_> = facts.iter().map(|f| f.1.as_str()).collect();
        assert_eq!(values, ["2025-03-14", "514-555-0199", "H2X 1Y4"]);
        assert!(verbatim_facts("what are my rights as a tenant").is_empty());
    }

    #[tokio::test]
    async fn fixed_plan_passes_through() {
        let b = ScriptedBackend::from_replies([
            r#"{"parsed_intent":"i","steps":["one","two"],"constraints":["c"]}"#,
        ]);
        let p = formulate_plan(&b, "do a thing").await.unwrap();
        assert_eq!(p.steps, ["one", "two"]);
        assert_eq!(p.constraints, ["c"]);
        assert_eq!(p.user_query, "do a thing");
    }

    #[tokio::test]
    async fn postal_code_constraint_is_added() {
        let b = ScriptedBackend::from_replies([
            r#"{"parsed_intent":"i","steps":["Search for rental dispute resolution services"],"constraints":[]}"#,
        ]);
        let p = formulate_plan(&b, "Find the rental dispute department closest to H3A0G4.").await.unwrap();
        assert_eq!(p.constraints, ["The user's postal code is H3A0G4; focus the search on Montreal."]);
    }

    #[tokio::test]
    async fn retries_then_gives_up() {
        let b = ScriptedBackend::from_replies([
            "no idea",
            r#"{"steps":[]}"#,
            r#"{"steps":["ok"]}"#,
        ]);
        assert_eq!(formulate_plan(&b, "q").await.unwrap().steps, ["ok"]);
        let b = ScriptedBackend::from_replies(["a", "b", "c", r#"{"steps":["late"]}"#]);
        assert!(matches!(formulate_plan(&b, "q").await, Err(AgentError::UnparseablePlan(_))));
        assert_eq!(b.remaining(), 1);
    }

    #[tokio::test]
    async fn empty_query_is_rejected_without_a_call() {
        let b = ScriptedBackend::from_replies(["x"]);
        assert!(matches!(formulate_plan(&b, "  ").await, Err(AgentError::EmptyQuery)));
        assert_eq!(b.remaining(), 1);
    }

    #[test]
    fn long_steps_are_rejected() {
        let long = "x".repeat(201);
        assert!(parse_plan(&format!(r#"{{"steps":["{long}"]}}"#), "q").is_err());
        let nine = vec!["s"; 9];
        assert!(parse_plan(&serde_json::json!({ "steps": nine }).to_string(), "q").is_err());
    }
}
