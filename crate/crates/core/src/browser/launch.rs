use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};

use super::BrowserError;

/// Environment variable naming the browser binary.
pub const BROWSER_PATH_ENV: &str = "WEBAGENT_BROWSER_PATH";

const CANDIDATES: &[&str] = &[
    "chromium",
    "chromium-browser",
    "google-chrome",
    "google-chrome-stable",
    "chrome",
    "headless_shell",
    "chrome-headless-shell",
];

const STARTUP_TIMEOUT: Duration = Duration::from_secs(30);

/// Locates a browser: `WEBAGENT_BROWSER_PATH` first, then well-known names on `PATH`.
pub fn find_browser() -> Result<PathBuf, BrowserError> {
    if let Some(path) = std::env::var_os(BROWSER_PATH_ENV).filter(|p| !p.is_empty()) {
        let path = PathBuf::from(path);
        return if path.is_file() {
            Ok(path)
        } else {
            Err(BrowserError::BrowserUnavailable(format!(
                "{BROWSER_PATH_ENV}={} does not point to a file",
                path.display()
            )))
        };
    }
    let dirs = std::env::var_os("PATH").unwrap_or_default();
    for dir in std::env::split_paths(&dirs) {
        for name in CANDIDATES {
            let candidate = dir.join(name);
            if candidate.is_file() {
                return Ok(candidate);
            }
        }
    }
    Err(BrowserError::BrowserUnavailable(format!(
        "no browser found; set {BROWSER_PATH_ENV} or put chromium on PATH"
    )))
}

pub(crate) struct Launched {
    pub child: Child,
    pub ws_url: String,
    pub profile: tempfile::TempDir,
}

pub(crate) async fn launch(binary: &Path, headless: bool, extra_args: &[String]) -> Result<Launched, BrowserError> {
    let profile = tempfile::Builder::new()
        .prefix("webagent-profile-")
        .tempdir()
        .map_err(|e| BrowserError::BrowserUnavailable(format!("cannot create profile dir: {e}")))?;

    let mut cmd = Command::new(binary);
    cmd.arg("--remote-debugging-port=0")
        .arg(format!("--user-data-dir={}", profile.path().display()))
        .args([
            "--no-first-run",
            "--no-default-browser-check",
            "--disable-background-networking",
            "--disable-sync",
            "--disable-extensions",
            "--disable-dev-shm-usage",
            "--disable-gpu",
            "--hide-scrollbars",
            "--mute-audio",
            "--no-sandbox",
            "--force-color-profile=srgb",
        ]);
    if headless {
        cmd.arg("--headless");
    }
    cmd.args(extra_args)
        .arg("about:blank")
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .kill_on_drop(true);

    let mut child = cmd.spawn().map_err(|e| {
        BrowserError::BrowserUnavailable(format!("cannot start {}: {e}", binary.display()))
    })?;
    let stderr = child.stderr.take().expect("stderr is piped");
    let mut lines = BufReader::new(stderr).lines();

    let ws_url = tokio::time::timeout(STARTUP_TIMEOUT, async {
        while let Ok(Some(line)) = lines.next_line().await {
            if let Some(rest) = line.split("DevTools listening on ").nth(1) {
                return Some(rest.trim().to_string());
            }
        }
        None
    })
    .await
    .ok()
    .flatten()
    .ok_or_else(|| BrowserError::ProtocolHandshakeFailed("browser never announced a debugging endpoint".into()))?;

    // Keep draining stderr so the browser never blocks on a full pipe.
    tokio::spawn(async move { while let Ok(Some(_)) = lines.next_line().await {} });

    Ok(Launched {
        child,
        ws_url,
        profile,
    })
}

/// Turns `http://host:port` (or an explicit `ws://` URL) into the browser WebSocket URL.
pub(crate) async fn resolve_endpoint(endpoint: &str) -> Result<String, BrowserError> {
    if endpoint.starts_with("ws://") || endpoint.starts_with("wss://") {
        return Ok(endpoint.to_string());
    }
    let base = endpoint.trim_end_matches('/');
    let url = format!("{base}/json/version");
    let unavailable = |e: String| BrowserError::BrowserUnavailable(format!("{endpoint}: {e}"));
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs(5))
        .build()
        .map_err(|e| unavailable(e.to_string()))?;
    let body: serde_json::Value = client
        .get(&url)
        .send()
        .await
        .map_err(|e| unavailable(e.to_string()))?
        .json()
        .await
        .map_err(|e| BrowserError::ProtocolHandshakeFailed(format!("{url}: {e}")))?;
    body.get("webSocketDebuggerUrl")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| BrowserError::ProtocolHandshakeFailed(format!("{url} has no webSocketDebuggerUrl")))
}
