use std::fmt;

use serde::{Deserialize, Serialize};

/// Upper bound for a single `wait`.
pub const MAX_WAIT_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
}

/// Everything the agent can ask the browser to do.
///
/// Serialized with the variant name under `"name"`, e.g.
/// `{"name": "input", "index": 4, "text": "H3A0G4"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Navigate { url: String },
    Click { index: i64 },
    Input { index: i64, text: String },
    SelectOption { index: i64, text: String },
    Scroll { direction: ScrollDirection },
    Hover { index: i64 },
    Wait { seconds: f64 },
    GoBack,
    SwitchTab { tab_id: String },
    Extract { question: String },
    Done { success: bool, answer: String },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Navigate { .. } => "navigate",
            Action::Click { .. } => "click",
            Action::Input { .. } => "input",
            Action::SelectOption { .. } => "select_option",
            Action::Scroll { .. } => "scroll",
            Action::Hover { .. } => "hover",
            Action::Wait { .. } => "wait",
            Action::GoBack => "go_back",
            Action::SwitchTab { .. } => "switch_tab",
            Action::Extract { .. } => "extract",
            Action::Done { .. } => "done",
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self, Action::Done { .. })
    }

    /// Element index this action targets, if any.
    pub fn target_index(&self) -> Option<i64> {
        match self {
            Action::Click { index }
            | Action::Input { index, .. }
            | Action::SelectOption { index, .. }
            | Action::Hover { index } => Some(*index),
            _ => None,
        }
    }

    /// Payload checks that do not need a browser.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Action::Wait { seconds } => {
                if !seconds.is_finite() || *seconds <= 0.0 || *seconds > MAX_WAIT_SECONDS {
                    return Err(format!(
                        "wait seconds must be in (0, {MAX_WAIT_SECONDS}], got {seconds}"
                    ));
                }
            }
            Action::Input { text, .. } => {
                if text.chars().any(|c| c.is_control() && c != '\n') {
                    return Err("input text may not contain control characters other than newline".into());
                }
            }
            Action::SelectOption { text, .. } if text.trim().is_empty() => {
                return Err("select_option needs the visible text of an option".into());
            }
            Action::Navigate { url } if url.trim().is_empty() => {
                return Err("navigate needs a url".into());
            }
            Action::SwitchTab { tab_id } if tab_id.trim().is_empty() => {
                return Err("switch_tab needs a tab_id".into());
            }
            Action::Done { success: true, answer } if answer.trim().is_empty() => {
                return Err("done with success=true needs a non-empty answer".into());
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Navigate { url } => write!(f, "navigate({url})"),
            Action::Click { index } => write!(f, "click({index})"),
            Action::Input { index, text } => write!(f, "input({index}, {text:?})"),
            Action::SelectOption { index, text } => write!(f, "select_option({index}, {text:?})"),
            Action::Scroll { direction } => {
                write!(f, "scroll({})", if *direction == ScrollDirection::Up { "up" } else { "down" })
            }
            Action::Hover { index } => write!(f, "hover({index})"),
            Action::Wait { seconds } => write!(f, "wait({seconds})"),
            Action::GoBack => f.write_str("go_back()"),
            Action::SwitchTab { tab_id } => write!(f, "switch_tab({tab_id})"),
            Action::Extract { question } => write!(f, "extract({question:?})"),
            Action::Done { success, answer } => write!(f, "done({success}, {answer:?})"),
        }
    }
}

/// Result of running one [`Action`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub action: Action,
    pub success: bool,
    pub message: String,
    pub new_url: Option<String>,
    pub duration_ms: u64,
}

impl ActionOutcome {
    pub fn ok(action: Action, message: impl Into<String>) -> Self {
        Self {
            action,
            success: true,
            message: message.into(),
            new_url: None,
            duration_ms: 0,
        }
    }

    /// A failed outcome; an empty message is replaced so failures always explain themselves.
    pub fn failed(action: Action, message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.trim().is_empty() {
            message = format!("{} failed", action.name());
        }
        Self {
            action,
            success: false,
            message,
            new_url: None,
            duration_ms: 0,
        }
    }

    pub fn with_url(mut self, url: Option<String>) -> Self {
        self.new_url = url;
        self
    }

    pub fn with_duration(mut self, ms: u64) -> Self {
        self.duration_ms = ms;
        self
    }
}
