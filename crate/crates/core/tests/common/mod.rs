//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use serde_json::json;
use webagent::bench::{Category, ScoredResult};
use webagent::browser::annotate::palette_color;
use webagent::browser::{Action, ActionOutcome, BrowserError, PageDriver, PageState, TabInfo};
use webagent::dom::{extract_interactive_elements, parse_snapshot, resolve_index, ElementRegistry, ScrollOffset, Viewport};
use webagent::llm::{ScriptLine, ScriptedBackend};

pub const FORM_QUERY: &str = "Fill out the online application form for Alex Martin, postal code H3A0G4.";
pub const CONFIRMATION: &str = "Form submitted successfully. Your confirmation number is 123-456.";

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn dom_corpus_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/dom")
}

/// `webagent fixtures --port 0` as a child process; killed on drop.
pub struct CliFixtures {
    child: Child,
    pub base_url: String,
}

impl CliFixtures {
    pub fn spawn() -> CliFixtures {
        let mut child = Command::new(env!("CARGO_BIN_EXE_webagent"))
            .args(["fixtures", "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn webagent fixtures");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).expect("read banner");
        let start = line.find("http://").expect("banner carries the URL");
        let url = line[start..].split_whitespace().next().unwrap();
        let base_url = url.trim_end_matches("/index.html").to_string();
        CliFixtures { child, base_url }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }
}

impl Drop for CliFixtures {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn reply(value: serde_json::Value) -> String {
    serde_json::to_string_pretty(&value).unwrap()
}

pub fn decision(goal: &str, actions: serde_json::Value) -> String {
    reply(json!({"evaluation": "", "memory": "", "next_goal": goal, "actions": actions}))
}

/// Plan, three decisions and a summary for the intake-form micro-flow that starts on the index page.
pub fn form_flow_script() -> ScriptedBackend {
    ScriptedBackend::from_replies([
        reply(json!({
            "parsed_intent": "Submit the online application form",
            "steps": ["Open the online application form", "Enter the name and postal code and submit"],
            "constraints": []
        })),
        decision("Open the form", json!([{"name": "click", "index": 12}])),
        decision(
            "Fill in and submit",
            json!([
                {"name": "input", "index": 7, "text": "Alex Martin"},
                {"name": "input", "index": 9, "text": "H3A0G4"},
                {"name": "click", "index": 12}
            ]),
        ),
        decision("Report", json!([{"name": "done", "success": true, "answer": CONFIRMATION}])),
        "The application form was submitted. Confirmation number 123-456.".to_string(),
    ])
}

/// Plan followed by `n` scroll decisions with fixed token counts.
pub fn endless_script(n: usize, plan_tokens: (u64, u64), step_tokens: (u64, u64)) -> ScriptedBackend {
    let mut lines = vec![ScriptLine {
        text: reply(json!({"parsed_intent": "Browse", "steps": ["Keep scrolling"], "constraints": []})),
        input_tokens: Some(plan_tokens.0),
        output_tokens: Some(plan_tokens.1),
        error: None,
    }];
    for _ in 0..n {
        lines.push(ScriptLine {
            text: decision("Scroll further", json!([{"name": "scroll", "direction": "down"}])),
            input_tokens: Some(step_tokens.0),
            output_tokens: Some(step_tokens.1),
            error: None,
        });
    }
    ScriptedBackend::new(lines)
}

/// Connected regions (4-neighbour) of pixels matching one of the first `n` mark colors,
/// ignoring specks smaller than `min_pixels`. Returns the cluster count per color index.
pub fn mark_clusters(png: &[u8], n: usize, min_pixels: usize) -> HashMap<usize, usize> {
    let img = image::load_from_memory(png).expect("decodable png").to_rgba8();
    let (w, h) = img.dimensions();
    let colors: Vec<(usize, [u8; 3])> = (1..=n).map(|i| (i, palette_color(i))).collect();
    let close = |p: &image::Rgba<u8>, c: &[u8; 3]| (0..3).all(|k| (p[k] as i16 - c[k] as i16).abs() <= 6);
    let mut seen = HashSet::new();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            if seen.contains(&(x, y)) {
                continue;
            }
            let p = img.get_pixel(x, y);
            let Some(&(idx, color)) = colors.iter().find(|(_, c)| close(p, c)) else { continue };
            let mut size = 0usize;
            let mut queue = VecDeque::from([(x, y)]);
            seen.insert((x, y));
            while let Some((cx, cy)) = queue.pop_front() {
                size += 1;
                let neighbours = [
                    (cx.wrapping_sub(1), cy),
                    (cx + 1, cy),
                    (cx, cy.wrapping_sub(1)),
                    (cx, cy + 1),
                ];
                for (nx, ny) in neighbours {
                    if nx < w && ny < h && !seen.contains(&(nx, ny)) && close(img.get_pixel(nx, ny), &color) {
                        seen.insert((nx, ny));
                        queue.push_back((nx, ny));
                    }
                }
            }
            if size >= min_pixels {
                *counts.entry(idx).or_default() += 1;
            }
        }
    }
    counts
}

/// A plain white PNG.
pub fn blank_png(w: u32, h: u32) -> Vec<u8> {
    let img = image::RgbaImage::from_pixel(w, h, image::Rgba([255, 255, 255, 255]));
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

/// Fifteen results for one model whose means hit the given duration and token values exactly.
/// Per-task values are spread symmetrically around the mean.
pub fn synthetic_results(model: &str, successes: usize, mean_duration_s: f64, mean_tokens: u64) -> Vec<ScoredResult> {
    let categories = [
        Category::VagueInquiry,
        Category::VagueInquiry,
        Category::ConsumerDispute,
        Category::ConsumerDispute,
        Category::ComplexSearch,
        Category::ComplexSearch,
        Category::LocatingAuthority,
        Category::LocatingAuthority,
        Category::LocatingAuthority,
        Category::LegalAid,
        Category::LegalAid,
        Category::LegalAid,
        Category::FormCompletion,
        Category::AppointmentBooking,
        Category::AppointmentBooking,
    ];
    (0..15)
        .map(|i| {
            let offset = i as i64 - 7;
            let tokens = (mean_tokens as i64 + offset * 1000) as u64;
            let input = tokens * 9 / 10;
            ScoredResult {
                task_id: format!("T-{i:02}"),
                category: categories[i],
                model_id: model.to_string(),
                success: i >= 15 - successes,
                steps: 10,
                duration_s: mean_duration_s + offset as f64 * 5.0,
                input_tokens: input,
                output_tokens: tokens - input,
                total_tokens: tokens,
                failure_reason: (i < 15 - successes).then(|| "synthetic failure".to_string()),
                trace_path: None,
            }
        })
        .collect()
}

const FAKE_PAGE: &str = r#"<html><body>
<a href="/a" data-wa-rect="10 10 100 20">Housing</a>
<button data-wa-rect="10 40 100 20">Search</button>
</body></html>"#;

/// Serves one static two-element page and logs the actions it receives.
/// Navigating to a URL containing `crash` fails fatally.
pub struct FakeDriver {
    pub actions: Mutex<Vec<Action>>,
    /// Added to every capture.
    pub capture_delay: Duration,
}

impl FakeDriver {
    pub fn new() -> Self {
        Self::slow(Duration::ZERO)
    }

    pub fn slow(capture_delay: Duration) -> Self {
        Self { actions: Mutex::new(Vec::new()), capture_delay }
    }
}

#[async_trait]
impl PageDriver for FakeDriver {
    async fn capture_state(&self) -> Result<PageState, BrowserError> {
        tokio::time::sleep(self.capture_delay).await;
        let snapshot = parse_snapshot(FAKE_PAGE, "http://fake.local/", Viewport::default(), ScrollOffset::default())?;
        let registry = extract_interactive_elements(&snapshot);
        Ok(PageState {
            snapshot,
            registry,
            screenshot: blank_png(1280, 720),
            tab_id: "T1".into(),
            open_tabs: vec![TabInfo { tab_id: "T1".into(), url: "http://fake.local/".into(), title: "Fake".into() }],
        })
    }

    async fn execute(&self, action: &Action, registry: &ElementRegistry) -> Result<ActionOutcome, BrowserError> {
        self.actions.lock().unwrap().push(action.clone());
        if let Some(index) = action.target_index() {
            resolve_index(registry, index).map_err(|_| BrowserError::UnknownIndex { index, len: registry.len() })?;
        }
        if let Action::Navigate { url } = action {
            if url.contains("crash") {
                return Err(BrowserError::PageCrashed);
            }
        }
        Ok(ActionOutcome::ok(action.clone(), "done"))
    }

    fn viewport(&self) -> Viewport {
        Viewport::default()
    }

    async fn close(&self) {}
}
