use std::collections::HashMap;
use std::io::Cursor;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};
use tokio::process::Child;
use tokio::sync::{watch, Mutex};
use tracing::{debug, warn};

use super::annotate::{annotate_screenshot, palette_css};
use super::cdp::CdpConnection;
use super::launch::{self, find_browser};
use super::scripts;
use super::{Action, ActionOutcome, BrowserError, PageDriver, PageState, ScrollDirection, SessionConfig, TabInfo};
use crate::dom::{
    extract_interactive_elements, parse_snapshot, resolve_index, visible_text, ElementRegistry, ScrollOffset,
    Viewport,
};

const NETWORK_QUIET: Duration = Duration::from_millis(500);
const POLL: Duration = Duration::from_millis(50);
const CLICK_SETTLE: Duration = Duration::from_millis(1500);
const MAX_EXTRACT_CHARS: usize = 10_000;

/// Network activity and crash state per attached page, fed from protocol events.
#[derive(Debug, Default)]
struct Activity {
    tabs: StdMutex<HashMap<String, TabActivity>>,
}

#[derive(Debug, Clone, Copy)]
struct TabActivity {
    last_network: Instant,
    crashed: bool,
}

impl Activity {
    fn touch(&self, session_id: &str) {
        let mut tabs = self.tabs.lock().unwrap();
        let entry = tabs.entry(session_id.to_string()).or_insert(TabActivity {
            last_network: Instant::now(),
            crashed: false,
        });
        entry.last_network = Instant::now();
    }

    fn crash(&self, session_id: &str) {
        if let Some(t) = self.tabs.lock().unwrap().get_mut(session_id) {
            t.crashed = true;
        }
    }

    fn quiet_for(&self, session_id: &str) -> Duration {
        self.tabs
            .lock()
            .unwrap()
            .get(session_id)
            .map(|t| t.last_network.elapsed())
            .unwrap_or(Duration::MAX)
    }

    fn crashed(&self, session_id: &str) -> bool {
        self.tabs
            .lock()
            .unwrap()
            .get(session_id)
            .is_some_and(|t| t.crashed)
    }
}

struct BrowserInner {
    conn: CdpConnection,
    child: Mutex<Option<Child>>,
    profile: StdMutex<Option<tempfile::TempDir>>,
    activity: Arc<Activity>,
    closed: AtomicBool,
}

/// A browser process (or remote endpoint) that hosts isolated sessions.
#[derive(Clone)]
pub struct Browser {
    inner: Arc<BrowserInner>,
}

impl std::fmt::Debug for Browser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Browser").finish_non_exhaustive()
    }
}

impl Browser {
    /// Starts a local browser, or connects when `config.endpoint` is set.
    pub async fn launch(config: &SessionConfig) -> Result<Browser, BrowserError> {
        if let Some(endpoint) = &config.endpoint {
            return Self::connect(endpoint).await;
        }
        let binary = match &config.browser_path {
            Some(p) => p.clone(),
            None => find_browser()?,
        };
        let launched = launch::launch(&binary, config.headless, &config.extra_args).await?;
        let conn = CdpConnection::connect(&launched.ws_url)
            .await
            .map_err(|e| BrowserError::ProtocolHandshakeFailed(e.to_string()))?;
        Ok(Self::from_parts(conn, Some(launched.child), Some(launched.profile)))
    }

    pub async fn connect(endpoint: &str) -> Result<Browser, BrowserError> {
        let ws = launch::resolve_endpoint(endpoint).await?;
        let conn = CdpConnection::connect(&ws)
            .await
            .map_err(|e| BrowserError::BrowserUnavailable(e.to_string()))?;
        conn.call("Browser.getVersion", json!({}), None)
            .await
            .map_err(|e| BrowserError::ProtocolHandshakeFailed(e.to_string()))?;
        Ok(Self::from_parts(conn, None, None))
    }

    fn from_parts(conn: CdpConnection, child: Option<Child>, profile: Option<tempfile::TempDir>) -> Browser {
        let activity = Arc::new(Activity::default());
        let mut events = conn.subscribe();
        let tracker = activity.clone();
        tokio::spawn(async move {
            loop {
                match events.recv().await {
                    Ok(ev) => {
                        let Some(sid) = ev.session_id.as_deref() else { continue };
                        match ev.method.as_str() {
                            "Network.requestWillBeSent"
                            | "Network.responseReceived"
                            | "Network.loadingFinished"
                            | "Network.loadingFailed"
                            | "Page.frameStartedLoading"
                            | "Page.loadEventFired" => tracker.touch(sid),
                            "Inspector.targetCrashed" => tracker.crash(sid),
                            _ => {}
                        }
                    }
                    Err(tokio::sync::broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(_) => break,
                }
            }
        });
        Browser {
            inner: Arc::new(BrowserInner {
                conn,
                child: Mutex::new(child),
                profile: StdMutex::new(profile),
                activity,
                closed: AtomicBool::new(false),
            }),
        }
    }

    /// Opens an isolated browser context with a single blank tab.
    pub async fn new_session(&self, config: SessionConfig) -> Result<Session, BrowserError> {
        self.new_session_inner(config, false).await
    }

    async fn new_session_inner(&self, config: SessionConfig, owns_browser: bool) -> Result<Session, BrowserError> {
        config.validate()?;
        let conn = &self.inner.conn;
        let ctx = conn
            .call("Target.createBrowserContext", json!({ "disposeOnDetach": true }), None)
            .await?;
        let context_id = str_field(&ctx, "browserContextId")?;
        let target = conn
            .call(
                "Target.createTarget",
                json!({ "url": "about:blank", "browserContextId": context_id }),
                None,
            )
            .await?;
        let target_id = str_field(&target, "targetId")?;

        let (close_tx, _) = watch::channel(false);
        let session = Session {
            inner: Arc::new(SessionInner {
                browser: self.clone(),
                owns_browser,
                config,
                context_id,
                state: Mutex::new(TabsState {
                    current: target_id.clone(),
                    attached: HashMap::new(),
                    last_capture: None,
                }),
                closed: AtomicBool::new(false),
                close_tx,
                tokens: AtomicU64::new(1),
            }),
        };
        {
            let mut st = session.inner.state.lock().await;
            session.attach(&mut st, &target_id).await?;
        }
        Ok(session)
    }

    pub async fn close(&self) {
        if self.inner.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = tokio::time::timeout(
            Duration::from_secs(2),
            self.inner.conn.call("Browser.close", json!({}), None),
        )
        .await;
        self.inner.conn.shutdown();
        if let Some(mut child) = self.inner.child.lock().await.take() {
            if tokio::time::timeout(Duration::from_secs(3), child.wait()).await.is_err() {
                let _ = child.kill().await;
            }
        }
        self.inner.profile.lock().unwrap().take();
    }
}

/// Launches a dedicated browser and opens one session on it. Closing the
/// session shuts the browser down.
pub async fn open_session(config: SessionConfig) -> Result<Session, BrowserError> {
    config.validate()?;
    let browser = Browser::launch(&config).await?;
    match browser.new_session_inner(config, true).await {
        Ok(s) => Ok(s),
        Err(e) => {
            browser.close().await;
            Err(e)
        }
    }
}

#[derive(Debug, Clone)]
struct CaptureMark {
    snapshot_id: String,
    generation: u64,
    target: String,
}

#[derive(Debug)]
struct TabsState {
    current: String,
    /// target id -> protocol session id
    attached: HashMap<String, String>,
    last_capture: Option<CaptureMark>,
}

impl TabsState {
    fn current_session(&self) -> Result<String, BrowserError> {
        self.attached
            .get(&self.current)
            .cloned()
            .ok_or_else(|| BrowserError::UnknownTab(self.current.clone()))
    }
}

struct SessionInner {
    browser: Browser,
    owns_browser: bool,
    config: SessionConfig,
    context_id: String,
    /// Held for the duration of every page command; serializes the session.
    state: Mutex<TabsState>,
    closed: AtomicBool,
    close_tx: watch::Sender<bool>,
    tokens: AtomicU64,
}

/// One browser context. Commands are serialized; clones share the context.
#[derive(Clone)]
pub struct Session {
    inner: Arc<SessionInner>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("context_id", &self.inner.context_id)
            .finish_non_exhaustive()
    }
}

fn str_field(v: &Value, key: &str) -> Result<String, BrowserError> {
    v.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BrowserError::Protocol(format!("reply is missing {key}")))
}

impl Session {
    pub fn config(&self) -> &SessionConfig {
        &self.inner.config
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    fn conn(&self) -> &CdpConnection {
        &self.inner.browser.inner.conn
    }

    fn activity(&self) -> &Activity {
        &self.inner.browser.inner.activity
    }

    /// Runs `fut` unless the session is closed first.
    async fn guard<T>(&self, fut: impl std::future::Future<Output = Result<T, BrowserError>>) -> Result<T, BrowserError> {
        if self.is_closed() {
            return Err(BrowserError::SessionClosed);
        }
        let mut rx = self.inner.close_tx.subscribe();
        tokio::select! {
            r = fut => {
                if self.is_closed() { Err(BrowserError::SessionClosed) } else { r }
            }
            _ = rx.wait_for(|closed| *closed) => Err(BrowserError::SessionClosed),
        }
    }

    async fn cmd(&self, sid: &str, method: &str, params: Value) -> Result<Value, BrowserError> {
        self.conn().call(method, params, Some(sid)).await.map_err(|e| {
            if self.is_closed() {
                BrowserError::SessionClosed
            } else if self.activity().crashed(sid) {
                BrowserError::PageCrashed
            } else {
                e.into()
            }
        })
    }

    async fn eval(&self, sid: &str, expression: &str) -> Result<Value, BrowserError> {
        let reply = self
            .cmd(
                sid,
                "Runtime.evaluate",
                json!({ "expression": expression, "returnByValue": true, "awaitPromise": true }),
            )
            .await?;
        if let Some(ex) = reply.get("exceptionDetails") {
            let text = ex
                .pointer("/exception/description")
                .or_else(|| ex.get("text"))
                .and_then(Value::as_str)
                .unwrap_or("script threw");
            return Err(BrowserError::Protocol(format!("page script failed: {text}")));
        }
        Ok(reply.pointer("/result/value").cloned().unwrap_or(Value::Null))
    }

    async fn attach(&self, st: &mut TabsState, target_id: &str) -> Result<String, BrowserError> {
        if let Some(sid) = st.attached.get(target_id) {
            return Ok(sid.clone());
        }
        let reply = self
            .conn()
            .call("Target.attachToTarget", json!({ "targetId": target_id, "flatten": true }), None)
            .await?;
        let sid = str_field(&reply, "sessionId")?;
        self.activity().touch(&sid);
        let vp = self.inner.config.viewport;
        self.cmd(&sid, "Page.enable", json!({})).await?;
        self.cmd(&sid, "Network.enable", json!({})).await?;
        self.cmd(&sid, "Inspector.enable", json!({})).await?;
        self.cmd(
            &sid,
            "Emulation.setDeviceMetricsOverride",
            json!({ "width": vp.width, "height": vp.height, "deviceScaleFactor": 1, "mobile": false }),
        )
        .await?;
        if let Some(ua) = &self.inner.config.user_agent_override {
            self.cmd(&sid, "Network.setUserAgentOverride", json!({ "userAgent": ua }))
                .await?;
        }
        st.attached.insert(target_id.to_string(), sid.clone());
        Ok(sid)
    }

    async fn list_tabs(&self) -> Result<Vec<TabInfo>, BrowserError> {
        let reply = self.conn().call("Target.getTargets", json!({}), None).await?;
        let tabs = reply
            .get("targetInfos")
            .and_then(Value::as_array)
            .map(|infos| {
                infos
                    .iter()
                    .filter(|t| t.get("type").and_then(Value::as_str) == Some("page"))
                    .filter(|t| t.get("browserContextId").and_then(Value::as_str) == Some(&self.inner.context_id))
                    .map(|t| TabInfo {
                        tab_id: t.get("targetId").and_then(Value::as_str).unwrap_or_default().to_string(),
                        url: t.get("url").and_then(Value::as_str).unwrap_or_default().to_string(),
                        title: t.get("title").and_then(Value::as_str).unwrap_or_default().to_string(),
                    })
                    .collect::<Vec<_>>()
            })
            .unwrap_or_default();
        let mut tabs = tabs;
        tabs.sort_by(|a, b| a.tab_id.cmp(&b.tab_id));
        Ok(tabs)
    }

    /// Makes sure the current tab still exists, falling back to any open tab.
    async fn current(&self, st: &mut TabsState) -> Result<String, BrowserError> {
        let tabs = self.list_tabs().await?;
        if !tabs.iter().any(|t| t.tab_id == st.current) {
            let Some(first) = tabs.first() else {
                return Err(BrowserError::PageCrashed);
            };
            st.current = first.tab_id.clone();
        }
        let target = st.current.clone();
        let sid = self.attach(st, &target).await?;
        if self.activity().crashed(&sid) {
            return Err(BrowserError::PageCrashed);
        }
        Ok(sid)
    }

    /// Waits for `readyState == complete` plus a quiet network window.
    /// Past the deadline a loaded page is accepted; an unloaded one is a timeout.
    async fn wait_ready(&self, sid: &str, timeout: Duration) -> Result<(), BrowserError> {
        let deadline = Instant::now() + timeout;
        loop {
            let ready = match tokio::time::timeout(Duration::from_secs(2), self.eval(sid, "document.readyState")).await {
                Ok(Ok(v)) => v.as_str() == Some("complete"),
                Ok(Err(BrowserError::SessionClosed)) => return Err(BrowserError::SessionClosed),
                Ok(Err(BrowserError::PageCrashed)) => return Err(BrowserError::PageCrashed),
                _ => false,
            };
            if ready && self.activity().quiet_for(sid) >= NETWORK_QUIET {
                return Ok(());
            }
            if Instant::now() >= deadline {
                return if ready {
                    debug!("network never went quiet; capturing anyway");
                    Ok(())
                } else {
                    Err(BrowserError::CaptureTimeout {
                        ms: timeout.as_millis() as u64,
                    })
                };
            }
            tokio::time::sleep(POLL).await;
        }
    }

    fn nav_timeout(&self) -> Duration {
        Duration::from_millis(self.inner.config.navigation_timeout_ms)
    }

    pub fn viewport(&self) -> Viewport {
        self.inner.config.viewport
    }

    /// URL of the current tab.
    pub async fn current_url(&self) -> Result<String, BrowserError> {
        self.guard(async {
            let mut st = self.inner.state.lock().await;
            let sid = self.current(&mut st).await?;
            let v = self.eval(&sid, "location.href").await?;
            Ok(v.as_str().unwrap_or_default().to_string())
        })
        .await
    }

    /// Evaluates a JavaScript expression in the current tab and returns its JSON value.
    pub async fn evaluate(&self, expression: &str) -> Result<Value, BrowserError> {
        self.guard(async {
            let mut st = self.inner.state.lock().await;
            let sid = self.current(&mut st).await?;
            self.eval(&sid, expression).await
        })
        .await
    }

    /// Viewport screenshot without marks.
    pub async fn screenshot(&self) -> Result<Vec<u8>, BrowserError> {
        self.guard(async {
            let mut st = self.inner.state.lock().await;
            let sid = self.current(&mut st).await?;
            self.raw_screenshot(&sid).await
        })
        .await
    }

    pub async fn tabs(&self) -> Result<Vec<TabInfo>, BrowserError> {
        self.guard(self.list_tabs()).await
    }

    async fn raw_screenshot(&self, sid: &str) -> Result<Vec<u8>, BrowserError> {
        let reply = self
            .cmd(
                sid,
                "Page.captureScreenshot",
                json!({ "format": "png", "fromSurface": true, "captureBeyondViewport": false }),
            )
            .await?;
        let data = reply
            .get("data")
            .and_then(Value::as_str)
            .ok_or_else(|| BrowserError::Screenshot("no image data".into()))?;
        let png = base64::engine::general_purpose::STANDARD
            .decode(data)
            .map_err(|e| BrowserError::Screenshot(e.to_string()))?;
        let (w, h) = image::ImageReader::new(Cursor::new(&png))
            .with_guessed_format()
            .map_err(|e| BrowserError::Screenshot(e.to_string()))?
            .into_dimensions()
            .map_err(|e| BrowserError::Screenshot(e.to_string()))?;
        let vp = self.inner.config.viewport;
        if (w, h) != (vp.width, vp.height) {
            return Err(BrowserError::Screenshot(format!(
                "screenshot is {w}x{h}, expected viewport {vp}"
            )));
        }
        Ok(png)
    }

    async fn capture_inner(&self) -> Result<PageState, BrowserError> {
        let mut st = self.inner.state.lock().await;
        let sid = self.current(&mut st).await?;
        self.wait_ready(&sid, self.nav_timeout()).await?;

        let raw = self
            .eval(&sid, &scripts::call(scripts::CAPTURE, &json!({ "register": true })))
            .await?;
        let html = raw
            .get("html")
            .and_then(Value::as_str)
            .ok_or_else(|| BrowserError::Protocol("capture returned no document".into()))?;
        let url = raw.get("url").and_then(Value::as_str).unwrap_or("about:blank");
        let scroll = ScrollOffset::new(
            raw.get("scrollX").and_then(Value::as_u64).unwrap_or(0) as u32,
            raw.get("scrollY").and_then(Value::as_u64).unwrap_or(0) as u32,
        );
        let generation = raw.get("gen").and_then(Value::as_u64).unwrap_or(0);
        let mut snapshot = parse_snapshot(html, url, self.inner.config.viewport, scroll)?;
        snapshot.id = format!("{}-{generation}", snapshot.id);
        let registry = extract_interactive_elements(&snapshot);

        let marks: Vec<Value> = registry
            .in_viewport()
            .map(|e| {
                json!({
                    "index": e.index,
                    "x": e.bounding_box.x,
                    "y": e.bounding_box.y,
                    "w": e.bounding_box.width,
                    "h": e.bounding_box.height,
                    "color": palette_css(e.index),
                })
            })
            .collect();
        let screenshot = if marks.is_empty() {
            self.raw_screenshot(&sid).await?
        } else {
            match self
                .eval(&sid, &scripts::call(scripts::OVERLAY, &json!({ "marks": marks })))
                .await
            {
                Ok(_) => {
                    let shot = self.raw_screenshot(&sid).await;
                    let removed = self.eval(&sid, &scripts::call(scripts::REMOVE_OVERLAY, &json!({}))).await;
                    if let Err(e) = removed {
                        warn!("overlay removal failed: {e}");
                    }
                    shot?
                }
                Err(e) => {
                    warn!("overlay injection failed ({e}); drawing marks on the raster instead");
                    let bare = self.raw_screenshot(&sid).await?;
                    annotate_screenshot(&bare, &registry).map_err(|e| BrowserError::Screenshot(e.to_string()))?
                }
            }
        };

        let open_tabs = self.list_tabs().await?;
        st.last_capture = Some(CaptureMark {
            snapshot_id: snapshot.id.clone(),
            generation,
            target: st.current.clone(),
        });
        Ok(PageState {
            snapshot,
            registry,
            screenshot,
            tab_id: st.current.clone(),
            open_tabs,
        })
    }

    /// Perceives the current tab: DOM, registry and marked screenshot.
    pub async fn capture_state(&self) -> Result<PageState, BrowserError> {
        self.guard(self.capture_inner()).await
    }

    /// Runs one action against the page the registry was captured from.
    pub async fn execute(&self, action: &Action, registry: &ElementRegistry) -> Result<ActionOutcome, BrowserError> {
        let started = Instant::now();
        action.validate().map_err(BrowserError::InvalidAction)?;
        if self.is_closed() {
            return Err(BrowserError::SessionClosed);
        }
        let outcome = match action {
            Action::Done { success, answer } => Ok(ActionOutcome::ok(
                action.clone(),
                if *success {
                    answer.clone()
                } else {
                    format!("task reported as not accomplished: {answer}")
                },
            )),
            Action::Wait { seconds } => {
                self.guard(async {
                    tokio::time::sleep(Duration::from_secs_f64(*seconds)).await;
                    Ok(ActionOutcome::ok(action.clone(), format!("waited {seconds} s")))
                })
                .await
            }
            _ => {
                let ms = self.inner.config.action_timeout_ms;
                let budget = Duration::from_millis(ms) + self.settle_allowance(action);
                match tokio::time::timeout(budget, self.guard(self.perform(action, registry))).await {
                    Ok(r) => r,
                    Err(_) => Err(BrowserError::ActionTimeout { ms }),
                }
            }
        }?;
        Ok(outcome.with_duration(started.elapsed().as_millis() as u64))
    }

    /// Navigation-bearing actions also get the navigation timeout to settle.
    fn settle_allowance(&self, action: &Action) -> Duration {
        match action {
            Action::Navigate { .. } | Action::Click { .. } | Action::GoBack | Action::SwitchTab { .. } => self.nav_timeout(),
            _ => Duration::ZERO,
        }
    }

    async fn perform(&self, action: &Action, registry: &ElementRegistry) -> Result<ActionOutcome, BrowserError> {
        let mut st = self.inner.state.lock().await;
        let sid = self.current(&mut st).await?;

        let target = match action.target_index() {
            Some(index) => {
                let el = resolve_index(registry, index).map_err(|_| BrowserError::UnknownIndex {
                    index,
                    len: registry.len(),
                })?;
                let mark = st.last_capture.as_ref().ok_or(BrowserError::StaleRegistry)?;
                if mark.snapshot_id != registry.snapshot_ref || mark.target != st.current {
                    return Err(BrowserError::StaleRegistry);
                }
                let node = el.node_ref.ok_or(BrowserError::StaleRegistry)?;
                Some((json!({ "gen": mark.generation, "id": node }), index))
            }
            None => None,
        };

        match action {
            Action::Navigate { url } => self.navigate(&mut st, &sid, action, url).await,
            Action::Click { .. } => {
                let (args, index) = target.expect("indexed action");
                let token = self.inner.tokens.fetch_add(1, Ordering::SeqCst);
                let before = self
                    .eval(&sid, &scripts::call(scripts::SET_MARKER, &json!({ "token": token })))
                    .await?
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                let tabs_before = self.list_tabs().await?;
                let mut point_args = args;
                point_args["hitTest"] = json!(true);
                let (x, y) = self.point(&sid, &point_args).await?;
                self.mouse(&sid, "mouseMoved", x, y).await?;
                self.mouse(&sid, "mousePressed", x, y).await?;
                self.mouse(&sid, "mouseReleased", x, y).await?;
                let mut new_url = self.settle(&sid, token, &before).await?;
                let mut message = format!("clicked element [{index}]");

                let tabs_after = self.list_tabs().await?;
                if let Some(opened) = tabs_after
                    .iter()
                    .find(|t| !tabs_before.iter().any(|b| b.tab_id == t.tab_id))
                {
                    let new_sid = self.attach(&mut st, &opened.tab_id).await?;
                    st.current = opened.tab_id.clone();
                    let _ = self.wait_ready(&new_sid, self.nav_timeout()).await;
                    let url = self.eval(&new_sid, "location.href").await?;
                    new_url = url.as_str().map(str::to_string);
                    message.push_str(&format!("; it opened a new tab {} which is now active", opened.tab_id));
                }
                if let Some(url) = &new_url {
                    self.enforce_host(&mut st, url).await?;
                }
                Ok(ActionOutcome::ok(action.clone(), message).with_url(new_url))
            }
            Action::Hover { .. } => {
                let (args, index) = target.expect("indexed action");
                let (x, y) = self.point(&sid, &args).await?;
                self.mouse(&sid, "mouseMoved", x, y).await?;
                tokio::time::sleep(Duration::from_millis(100)).await;
                Ok(ActionOutcome::ok(action.clone(), format!("hovering over element [{index}]")))
            }
            Action::Input { text, .. } => {
                let (mut args, index) = target.expect("indexed action");
                args["text"] = json!(text);
                let prep = self.eval(&sid, &scripts::call(&scripts::input_prepare(), &args)).await?;
                check_script_error(&prep)?;
                if prep.get("assigned").and_then(Value::as_bool) != Some(true) && !text.is_empty() {
                    self.cmd(&sid, "Input.insertText", json!({ "text": text })).await?;
                }
                let done = self.eval(&sid, &scripts::call(&scripts::input_finish(), &args)).await?;
                check_script_error(&done)?;
                let value = done.get("value").and_then(Value::as_str).unwrap_or_default();
                let mut message = format!("typed {text:?} into element [{index}]");
                if value != text {
                    message.push_str(&format!(" (the field now holds {value:?})"));
                }
                Ok(ActionOutcome::ok(action.clone(), message))
            }
            Action::SelectOption { text, .. } => {
                let (mut args, index) = target.expect("indexed action");
                args["text"] = json!(text);
                let r = self.eval(&sid, &scripts::call(&scripts::select_option(), &args)).await?;
                if r.get("error").and_then(Value::as_str) == Some("no_option") {
                    let options: Vec<String> = r
                        .get("options")
                        .and_then(Value::as_array)
                        .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
                        .unwrap_or_default();
                    return Err(BrowserError::ElementNotInteractable(format!(
                        "element [{index}] has no option {text:?}; options are: {}",
                        options.join(" | ")
                    )));
                }
                check_script_error(&r)?;
                let chosen = r.get("chosen").and_then(Value::as_str).unwrap_or(text);
                Ok(ActionOutcome::ok(action.clone(), format!("selected {chosen:?} in element [{index}]")))
            }
            Action::Scroll { direction } => {
                let h = self.inner.config.viewport.height as i64;
                let dy = if *direction == ScrollDirection::Down { h } else { -h };
                let r = self
                    .eval(&sid, &scripts::call(scripts::SCROLL, &json!({ "dy": dy })))
                    .await?;
                let after = r.get("after").and_then(Value::as_i64).unwrap_or(0);
                let before = r.get("before").and_then(Value::as_i64).unwrap_or(0);
                let max = r.get("max").and_then(Value::as_i64).unwrap_or(0);
                let message = if after == before {
                    format!("already at the {} of the page", if dy > 0 { "bottom" } else { "top" })
                } else {
                    format!("scrolled to y={after} of {max}")
                };
                Ok(ActionOutcome::ok(action.clone(), message))
            }
            Action::GoBack => {
                let history = self.cmd(&sid, "Page.getNavigationHistory", json!({})).await?;
                let current = history.get("currentIndex").and_then(Value::as_u64).unwrap_or(0) as usize;
                if current == 0 {
                    return Err(BrowserError::NavigationFailed("there is no previous page in this tab".into()));
                }
                let entry = history
                    .pointer(&format!("/entries/{}/id", current - 1))
                    .and_then(Value::as_i64)
                    .ok_or_else(|| BrowserError::Protocol("malformed navigation history".into()))?;
                let token = self.inner.tokens.fetch_add(1, Ordering::SeqCst);
                let before = self
                    .eval(&sid, &scripts::call(scripts::SET_MARKER, &json!({ "token": token })))
                    .await?
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                self.cmd(&sid, "Page.navigateToHistoryEntry", json!({ "entryId": entry }))
                    .await?;
                let new_url = self.settle(&sid, token, &before).await?;
                Ok(ActionOutcome::ok(action.clone(), "went back one page").with_url(new_url))
            }
            Action::SwitchTab { tab_id } => {
                let tabs = self.list_tabs().await?;
                let tab = tabs
                    .iter()
                    .find(|t| &t.tab_id == tab_id)
                    .ok_or_else(|| BrowserError::UnknownTab(tab_id.clone()))?;
                self.attach(&mut st, tab_id).await?;
                let _ = self
                    .conn()
                    .call("Target.activateTarget", json!({ "targetId": tab_id }), None)
                    .await;
                st.current = tab_id.clone();
                Ok(ActionOutcome::ok(action.clone(), format!("switched to tab {tab_id}")).with_url(Some(tab.url.clone())))
            }
            Action::Extract { question } => {
                let raw = self
                    .eval(&sid, &scripts::call(scripts::CAPTURE, &json!({ "register": false })))
                    .await?;
                let html = raw.get("html").and_then(Value::as_str).unwrap_or("<html></html>");
                let url = raw.get("url").and_then(Value::as_str).unwrap_or("about:blank");
                let snap = parse_snapshot(html, url, self.inner.config.viewport, ScrollOffset::default())?;
                let text = visible_text(&snap);
                let text = if text.chars().count() > MAX_EXTRACT_CHARS {
                    let mut t: String = text.chars().take(MAX_EXTRACT_CHARS).collect();
                    t.push_str("\n[... text truncated]");
                    t
                } else if text.is_empty() {
                    "(the page has no visible text)".to_string()
                } else {
                    text
                };
                Ok(ActionOutcome::ok(
                    action.clone(),
                    format!("Page text for {question:?}:\n{text}"),
                ))
            }
            Action::Done { .. } | Action::Wait { .. } => unreachable!("handled without a page"),
        }
    }

    async fn navigate(
        &self,
        st: &mut TabsState,
        sid: &str,
        action: &Action,
        url: &str,
    ) -> Result<ActionOutcome, BrowserError> {
        let current = self.eval(sid, "location.href").await?;
        let resolved = match url::Url::parse(url) {
            Ok(u) => u,
            Err(_) => current
                .as_str()
                .and_then(|c| url::Url::parse(c).ok())
                .and_then(|base| base.join(url).ok())
                .ok_or_else(|| BrowserError::NavigationFailed(format!("{url:?} is not a valid URL")))?,
        };
        if !matches!(resolved.scheme(), "http" | "https" | "about" | "data" | "file") {
            return Err(BrowserError::NavigationFailed(format!(
                "scheme {} is not supported",
                resolved.scheme()
            )));
        }
        if resolved.as_str() != "about:blank" && self.inner.config.allowed_hosts.is_some() {
            let host = resolved.host_str().unwrap_or_default();
            if !self.inner.config.host_allowed(host) {
                return Err(BrowserError::HostNotAllowed(format!("{host:?} is not in the allowed host list")));
            }
        }
        let reply = self
            .cmd(sid, "Page.navigate", json!({ "url": resolved.as_str() }))
            .await?;
        if let Some(err) = reply.get("errorText").and_then(Value::as_str).filter(|e| !e.is_empty()) {
            return Err(BrowserError::NavigationFailed(format!("{resolved}: {err}")));
        }
        let message = match self.wait_ready(sid, self.nav_timeout()).await {
            Ok(()) => format!("navigated to {resolved}"),
            Err(BrowserError::CaptureTimeout { ms }) => {
                format!("navigated to {resolved}; the page was still loading after {ms} ms")
            }
            Err(e) => return Err(e),
        };
        st.last_capture = None;
        let now = self.eval(sid, "location.href").await.ok();
        let now = now.and_then(|v| v.as_str().map(str::to_string));
        Ok(ActionOutcome::ok(action.clone(), message).with_url(now))
    }

    /// After a click: on a new document wait for readiness; otherwise wait
    /// briefly for in-page effects. Returns the URL if it changed.
    async fn settle(&self, sid: &str, token: u64, before: &str) -> Result<Option<String>, BrowserError> {
        tokio::time::sleep(Duration::from_millis(100)).await;
        let deadline = Instant::now() + CLICK_SETTLE;
        loop {
            let status = tokio::time::timeout(
                Duration::from_secs(2),
                self.eval(sid, &scripts::call(scripts::PAGE_STATUS, &json!({ "token": token }))),
            )
            .await;
            match status {
                Ok(Ok(s)) => {
                    let same = s.get("same").and_then(Value::as_bool).unwrap_or(false);
                    if !same {
                        match self.wait_ready(sid, self.nav_timeout()).await {
                            Ok(()) | Err(BrowserError::CaptureTimeout { .. }) => {}
                            Err(e) => return Err(e),
                        }
                        break;
                    }
                    let ready = s.get("ready").and_then(Value::as_str) == Some("complete");
                    if ready && self.activity().quiet_for(sid) >= Duration::from_millis(300) {
                        break;
                    }
                }
                Ok(Err(BrowserError::SessionClosed)) => return Err(BrowserError::SessionClosed),
                Ok(Err(BrowserError::PageCrashed)) => return Err(BrowserError::PageCrashed),
                _ => {}
            }
            if Instant::now() >= deadline {
                break;
            }
            tokio::time::sleep(POLL).await;
        }
        let now = self.eval(sid, "location.href").await?;
        let now = now.as_str().unwrap_or_default();
        Ok((now != before).then(|| now.to_string()))
    }

    /// Backs out of a page on a host outside the allow list.
    async fn enforce_host(&self, st: &mut TabsState, url: &str) -> Result<(), BrowserError> {
        if self.inner.config.allowed_hosts.is_none() {
            return Ok(());
        }
        let Ok(parsed) = url::Url::parse(url) else { return Ok(()) };
        let host = parsed.host_str().unwrap_or_default();
        if parsed.as_str() == "about:blank" || self.inner.config.host_allowed(host) {
            return Ok(());
        }
        let sid = st.current_session()?;
        let _ = self.eval(&sid, "history.back()").await;
        let _ = self.wait_ready(&sid, self.nav_timeout()).await;
        Err(BrowserError::HostNotAllowed(format!(
            "the click led to {host:?}, which is not in the allowed host list; went back"
        )))
    }

    async fn point(&self, sid: &str, args: &Value) -> Result<(f64, f64), BrowserError> {
        let r = self.eval(sid, &scripts::call(&scripts::point(), args)).await?;
        check_script_error(&r)?;
        let x = r.get("x").and_then(Value::as_f64).unwrap_or(0.0);
        let y = r.get("y").and_then(Value::as_f64).unwrap_or(0.0);
        Ok((x, y))
    }

    async fn mouse(&self, sid: &str, kind: &str, x: f64, y: f64) -> Result<(), BrowserError> {
        let mut params = json!({ "type": kind, "x": x, "y": y });
        if kind != "mouseMoved" {
            params["button"] = json!("left");
            params["clickCount"] = json!(1);
        }
        self.cmd(sid, "Input.dispatchMouseEvent", params).await?;
        Ok(())
    }

    /// Releases the browser context (and the browser, if this session launched it).
    /// Safe to call more than once; in-flight commands end with `SessionClosed`.
    pub async fn close(&self) {
        if self.inner.closed.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = self.inner.close_tx.send(true);
        let _ = tokio::time::timeout(
            Duration::from_secs(2),
            self.conn().call(
                "Target.disposeBrowserContext",
                json!({ "browserContextId": self.inner.context_id }),
                None,
            ),
        )
        .await;
        if self.inner.owns_browser {
            self.inner.browser.close().await;
        }
    }
}

fn check_script_error(v: &Value) -> Result<(), BrowserError> {
    match v.get("error").and_then(Value::as_str) {
        None => Ok(()),
        Some("stale") => Err(BrowserError::StaleRegistry),
        Some(_) => Err(BrowserError::ElementNotInteractable(
            v.get("reason")
                .and_then(Value::as_str)
                .unwrap_or("element cannot be used")
                .to_string(),
        )),
    }
}

#[async_trait]
impl PageDriver for Session {
    async fn capture_state(&self) -> Result<PageState, BrowserError> {
        Session::capture_state(self).await
    }

    async fn execute(&self, action: &Action, registry: &ElementRegistry) -> Result<ActionOutcome, BrowserError> {
        Session::execute(self, action, registry).await
    }

    fn viewport(&self) -> Viewport {
        Session::viewport(self)
    }

    async fn close(&self) {
        Session::close(self).await
    }
}
