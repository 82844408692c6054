use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use include_dir::{include_dir, Dir};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BenchError;

/// Replaced by the fixture server base URL (`http://127.0.0.1:<port>`) at run time.
pub const FIXTURES_PLACEHOLDER: &str = "{fixtures}";

static SUITES: Dir<'_> = include_dir!("$CARGO_MANIFEST_DIR/suites");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    InformationGathering,
    ResourceFinding,
    ActionTaking,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::InformationGathering => 1,
            Stage::ResourceFinding => 2,
            Stage::ActionTaking => 3,
        }
    }
}

/// The seven task categories, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    VagueInquiry,
    ConsumerDispute,
    ComplexSearch,
    LocatingAuthority,
    LegalAid,
    FormCompletion,
    AppointmentBooking,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::VagueInquiry,
        Category::ConsumerDispute,
        Category::ComplexSearch,
        Category::LocatingAuthority,
        Category::LegalAid,
        Category::FormCompletion,
        Category::AppointmentBooking,
    ];

    pub fn stage(self) -> Stage {
        match self {
            Category::VagueInquiry | Category::ConsumerDispute => Stage::InformationGathering,
            Category::ComplexSearch | Category::LocatingAuthority | Category::LegalAid => Stage::ResourceFinding,
            Category::FormCompletion | Category::AppointmentBooking => Stage::ActionTaking,
        }
    }

    /// Code used in task ids, e.g. `LSA` in `S2-LSA-01`.
    pub fn code(self) -> &'static str {
        match self {
            Category::VagueInquiry => "VRI",
            Category::ConsumerDispute => "CDD",
            Category::ComplexSearch => "CS",
            Category::LocatingAuthority => "LSA",
            Category::LegalAid => "LA",
            Category::FormCompletion => "OFC",
            Category::AppointmentBooking => "OAB",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::VagueInquiry => "Vague Inquiry",
            Category::ConsumerDispute => "Consumer Dispute",
            Category::ComplexSearch => "Complex Search",
            Category::LocatingAuthority => "Locating Authority",
            Category::LegalAid => "Legal Aid",
            Category::FormCompletion => "Form Completion",
            Category::AppointmentBooking => "Appointment Booking",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// How a task's success is decided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Validator {
    /// Every substring must occur (case-insensitive) in the final answer or summary.
    AnswerContains { all_of: Vec<String> },
    AnswerRegex { pattern: String },
    /// GET `endpoint` and compare the record's fields.
    SandboxSubmission { endpoint: String, expected_fields: BTreeMap<String, String> },
    /// Some visited URL must match.
    UrlVisited { pattern: String },
    /// Never passes automatically; a review stub is written instead.
    HumanJudgment { rubric: String },
}

impl Validator {
    pub fn is_automated(&self) -> bool {
        !matches!(self, Validator::HumanJudgment { .. })
    }

    fn check(&self) -> Result<(), (String, String)> {
        match self {
            Validator::AnswerContains { all_of } => {
                if all_of.is_empty() {
                    return Err(("validator.all_of".into(), "must not be empty".into()));
                }
                if all_of.iter().any(|s| s.trim().is_empty()) {
                    return Err(("validator.all_of".into(), "entries must not be blank".into()));
                }
            }
            Validator::AnswerRegex { pattern } | Validator::UrlVisited { pattern } => {
                Regex::new(pattern).map_err(|e| ("validator.pattern".to_string(), e.to_string()))?;
            }
            Validator::SandboxSubmission { endpoint, expected_fields } => {
                if expected_fields.is_empty() {
                    return Err(("validator.expected_fields".into(), "must not be empty".into()));
                }
                let probe = endpoint.replace(FIXTURES_PLACEHOLDER, "http://127.0.0.1:1");
                url::Url::parse(&probe).map_err(|e| ("validator.endpoint".to_string(), e.to_string()))?;
            }
            Validator::HumanJudgment { rubric } => {
                if rubric.trim().is_empty() {
                    return Err(("validator.rubric".into(), "must not be empty".into()));
                }
            }
        }
        Ok(())
    }

    /// Copy with the fixture placeholder replaced.
    pub fn resolved(&self, base: &str) -> Validator {
        match self {
            Validator::SandboxSubmission { endpoint, expected_fields } => Validator::SandboxSubmission {
                endpoint: endpoint.replace(FIXTURES_PLACEHOLDER, base),
                expected_fields: expected_fields.clone(),
            },
            other => other.clone(),
        }
    }
}

fn default_timeout() -> u64 {
    900
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub stage: Stage,
    pub category: Category,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_url: Option<String>,
    pub validator: Validator,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Whether the suite expects this task to pass; `bench` exits non-zero only for expected passes that fail.
    #[serde(default = "default_true")]
    pub expected_pass: bool,
}

static TASK_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^S([123])-([A-Z]+)-(\d{2})$").unwrap());

impl TaskSpec {
    fn check(&self) -> Result<(), (String, String)> {
        let caps = TASK_ID
            .captures(&self.task_id)
            .ok_or_else(|| ("task_id".to_string(), format!("{:?} does not look like S<stage>-<CODE>-<nn>", self.task_id)))?;
        if caps[1] != self.stage.number().to_string() || &caps[2] != self.category.code() {
            return Err((
                "task_id".into(),
                format!(
                    "{} does not match stage {} / category code {}",
                    self.task_id,
                    self.stage.number(),
                    self.category.code()
                ),
            ));
        }
        if self.category.stage() != self.stage {
            return Err(("category".into(), format!("{} does not belong to stage {:?}", self.category, self.stage)));
        }
        if self.query.trim().is_empty() {
            return Err(("query".into(), "must not be empty".into()));
        }
        if self.timeout_s == 0 {
            return Err(("timeout_s".into(), "must be positive".into()));
        }
        if let Some(u) = &self.start_url {
            url::Url::parse(&u.replace(FIXTURES_PLACEHOLDER, "http://127.0.0.1:1"))
                .map_err(|e| ("start_url".to_string(), e.to_string()))?;
        }
        self.validator.check()
    }

    pub fn uses_fixtures(&self) -> bool {
        self.start_url.as_deref().is_some_and(|u| u.contains(FIXTURES_PLACEHOLDER))
            || matches!(&self.validator, Validator::SandboxSubmission { endpoint, .. } if endpoint.contains(FIXTURES_PLACEHOLDER))
    }

    pub fn resolved_start_url(&self, base: &str) -> Option<String> {
        self.start_url.as_ref().map(|u| u.replace(FIXTURES_PLACEHOLDER, base))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSuite {
    pub origin: String,
    pub tasks: Vec<TaskSpec>,
}

impl TaskSuite {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn count(&self, category: Category) -> usize {
        self.tasks.iter().filter(|t| t.category == category).count()
    }
}

/// Parses suite JSON. `origin` names the source in error messages.
pub fn parse_tasks(json: &str, origin: &str) -> Result<TaskSuite, BenchError> {
    let schema = |field: String, message: String| BenchError::Schema { path: origin.to_string(), field, message };
    let value: Value = serde_json::from_str(json).map_err(|e| schema("(document)".into(), e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(schema("(document)".into(), "a suite is a JSON array of tasks".into()));
    };
    let mut tasks: Vec<TaskSpec> = Vec::with_capacity(items.len());
    for (i, item) in items.into_iter().enumerate() {
        let id = item.get("task_id").and_then(Value::as_str).map(str::to_string);
        let at = |field: &str| match &id {
            Some(id) => format!("tasks[{i}] ({id}).{field}"),
            None => format!("tasks[{i}].{field}"),
        };
        let task: TaskSpec = serde_json::from_value(item).map_err(|e| schema(at("").trim_end_matches('.').to_string(), e.to_string()))?;
        task.check().map_err(|(field, message)| schema(at(&field), message))?;
        if tasks.iter().any(|t| t.task_id == task.task_id) {
            return Err(BenchError::DuplicateTaskId(task.task_id));
        }
        tasks.push(task);
    }
    Ok(TaskSuite { origin: origin.to_string(), tasks })
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskSuite, BenchError> {
    let path = path.as_ref();
    let json = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    parse_tasks(&json, &path.display().to_string())
}

/// The shipped 15-task suite, run against the fixture site.
pub fn default_suite() -> TaskSuite {
    let file = SUITES.get_file("default.json").expect("default suite is embedded");
    parse_tasks(file.contents_utf8().expect("utf-8 suite"), "default.json").expect("default suite is valid")
}

/// Tasks against public websites; most need human review.
pub fn live_suite() -> TaskSuite {
    let file = SUITES.get_file("live.json").expect("live suite is embedded");
    parse_tasks(file.contents_utf8().expect("utf-8 suite"), "live.json").expect("live suite is valid")
}

/// Replay scripts for the default suite, keyed by task id.
pub fn default_scripts() -> BTreeMap<String, String> {
    SUITES
        .get_dir("scripts")
        .map(|d| {
            d.files()
                .filter_map(|f| {
                    let stem = f.path().file_stem()?.to_str()?.to_string();
                    Some((stem, f.contents_utf8()?.to_string()))
                })
                .collect()
        })
        .unwrap_or_default()
}
