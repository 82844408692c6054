//! Live browser control over the debugging wire protocol.
//!
//! [`Browser`] owns one browser process (or a connection to an existing
//! one); each [`Session`] is an isolated browser context with its own
//! tabs. The agent talks to sessions through the [`PageDriver`] trait so
//! the loop can also run against in-memory drivers in tests.

mod action;
pub mod annotate;
pub mod cdp;
mod launch;
mod scripts;
mod session;

pub use action::{Action, ActionOutcome, ScrollDirection, MAX_WAIT_SECONDS};
pub use annotate::{annotate_screenshot, AnnotateError, PALETTE};
pub use launch::{find_browser, BROWSER_PATH_ENV};
pub use session::{open_session, Browser, Session};

use std::path::PathBuf;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::dom::{DomError, DomSnapshot, ElementRegistry, Viewport};

#[derive(Debug, Clone, thiserror::Error)]
pub enum BrowserError {
    #[error("browser unavailable: {0}")]
    BrowserUnavailable(String),
    #[error("protocol handshake failed: {0}")]
    ProtocolHandshakeFailed(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("page crashed")]
    PageCrashed,
    #[error("page did not finish loading within {ms} ms")]
    CaptureTimeout { ms: u64 },
    #[error("element registry is stale; the page changed since it was captured, re-capture first")]
    StaleRegistry,
    #[error("unknown element index {index}; the page has {len} tagged elements")]
    UnknownIndex { index: i64, len: usize },
    #[error("element not interactable: {0}")]
    ElementNotInteractable(String),
    #[error("action timed out after {ms} ms")]
    ActionTimeout { ms: u64 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("host not allowed: {0}")]
    HostNotAllowed(String),
    #[error("navigation failed: {0}")]
    NavigationFailed(String),
    #[error("unknown tab: {0}")]
    UnknownTab(String),
    #[error("screenshot failed: {0}")]
    Screenshot(String),
    #[error(transparent)]
    Dom(#[from] DomError),
}

impl BrowserError {
    /// Step-level failures the agent can report back to the model and keep going.
    pub fn is_recoverable(&self) -> bool {
        matches!(
            self,
            BrowserError::StaleRegistry
                | BrowserError::UnknownIndex { .. }
                | BrowserError::ElementNotInteractable(_)
                | BrowserError::ActionTimeout { .. }
                | BrowserError::InvalidAction(_)
                | BrowserError::HostNotAllowed(_)
                | BrowserError::NavigationFailed(_)
                | BrowserError::UnknownTab(_)
        )
    }
}

impl From<cdp::CdpError> for BrowserError {
    fn from(e: cdp::CdpError) -> Self {
        match e {
            cdp::CdpError::Closed => BrowserError::SessionClosed,
            cdp::CdpError::Connect { url, reason } => {
                BrowserError::BrowserUnavailable(format!("{url}: {reason}"))
            }
            other => BrowserError::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub headless: bool,
    pub viewport: Viewport,
    pub navigation_timeout_ms: u64,
    pub action_timeout_ms: u64,
    pub user_agent_override: Option<String>,
    /// When set, `navigate` to any other host fails with `HostNotAllowed`.
    pub allowed_hosts: Option<Vec<String>>,
    /// Connect to an already running browser (`http://host:port` or `ws://...`) instead of launching one.
    pub endpoint: Option<String>,
    /// Browser binary; defaults to [`find_browser`].
    pub browser_path: Option<PathBuf>,
    pub extra_args: Vec<String>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            headless: true,
            viewport: Viewport::new(1280, 720),
            navigation_timeout_ms: 30_000,
            action_timeout_ms: 10_000,
            user_agent_override: None,
            allowed_hosts: None,
            endpoint: None,
            browser_path: None,
            extra_args: Vec::new(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), BrowserError> {
        self.viewport.validate()?;
        if self.navigation_timeout_ms == 0 || self.action_timeout_ms == 0 {
            return Err(BrowserError::InvalidAction("timeouts must be positive".into()));
        }
        Ok(())
    }

    pub fn host_allowed(&self, host: &str) -> bool {
        match &self.allowed_hosts {
            None => true,
            Some(list) => list.iter().any(|h| h.eq_ignore_ascii_case(host)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabInfo {
    pub tab_id: String,
    pub url: String,
    pub title: String,
}

/// Everything the agent perceives at one step.
#[derive(Debug, Clone)]
pub struct PageState {
    pub snapshot: DomSnapshot,
    pub registry: ElementRegistry,
    /// PNG of the viewport with marks drawn.
    pub screenshot: Vec<u8>,
    pub tab_id: String,
    pub open_tabs: Vec<TabInfo>,
}

/// What the agent loop needs from a browser.
#[async_trait]
pub trait PageDriver: Send + Sync {
    async fn capture_state(&self) -> Result<PageState, BrowserError>;

    async fn execute(&self, action: &Action, registry: &ElementRegistry) -> Result<ActionOutcome, BrowserError>;

    fn viewport(&self) -> Viewport;

    async fn close(&self);
}
