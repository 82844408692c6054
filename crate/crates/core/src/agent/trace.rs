use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpisodeConfig, Plan, StepRecord, Terminal};

pub const TRACE_FILE: &str = "trace.jsonl";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Schema { path: PathBuf, line: usize, message: String },
}

/// First line of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub query: String,
    pub model_id: String,
    pub prompt_version: String,
    pub prompt_hash: String,
    pub config: EpisodeConfig,
    pub plan: Option<Plan>,
    pub started_at: String,
}

/// Last line of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEnd {
    pub terminal: Terminal,
    pub final_answer: String,
    pub summary: String,
    pub total_tokens: u64,
    pub total_duration_ms: u64,
}

/// A complete episode trace: header, one line per step, end line.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub end: TraceEnd,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(StepRecord),
    End(TraceEnd),
}

impl Trace {
    /// Copy with every wall-clock field zeroed, for comparing runs.
    pub fn without_timing(&self) -> Trace {
        let mut t = self.clone();
        t.header.started_at.clear();
        t.end.total_duration_ms = 0;
        for s in &mut t.steps {
            s.duration_ms = 0;
            for o in &mut s.outcomes {
                o.duration_ms = 0;
            }
        }
        t
    }

    pub fn tokens(&self) -> u64 {
        self.steps.iter().map(StepRecord::tokens).sum()
    }

    /// Human-readable digest: one line per step, then a totals line.
    pub fn digest(&self) -> String {
        let mut out = format!("query: {}\nmodel: {}\n", self.header.query, self.header.model_id);
        for s in &self.steps {
            let actions: Vec<String> = if s.outcomes.is_empty() {
                s.decision.actions.iter().map(|a| format!("{a} -> not run")).collect()
            } else {
                s.outcomes
                    .iter()
                    .map(|o| {
                        let status = if o.success { "ok".to_string() } else { format!("FAILED: {}", o.message) };
                        format!("{} -> {status}", o.action)
                    })
                    .collect()
            };
            let actions = if actions.is_empty() { "(no action)".to_string() } else { actions.join("; ") };
            out.push_str(&format!(
                "step {:>2}  {}  tokens {}/{}  {}\n",
                s.step_index, actions, s.tokens_in, s.tokens_out, s.page_url
            ));
        }
        let tokens_in: u64 = self.steps.iter().map(|s| s.tokens_in).sum();
        let tokens_out: u64 = self.steps.iter().map(|s| s.tokens_out).sum();
        out.push_str(&format!(
            "total: {} steps, tokens in {tokens_in}, out {tokens_out}, total {}, {:.1} s, status {}\n",
            self.steps.len(),
            tokens_in + tokens_out,
            self.end.total_duration_ms as f64 / 1000.0,
            self.end.terminal.status()
        ));
        if !self.end.final_answer.is_empty() {
            out.push_str(&format!("answer: {}\n", self.end.final_answer));
        }
        out
    }
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), TraceError> {
    let io = |source| TraceError::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let mut put = |line: &Line| -> Result<(), TraceError> {
        let json = serde_json::to_string(line).expect("trace lines serialize");
        writeln!(out, "{json}").map_err(io)
    };
    put(&Line::Header(trace.header.clone()))?;
    for s in &trace.steps {
        put(&Line::Step(s.clone()))?;
    }
    put(&Line::End(trace.end.clone()))?;
    out.flush().map_err(io)
}

/// Reads and checks a trace: header first, contiguous steps, end last,
/// token total consistent with the steps.
pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    let io = |source| TraceError::Io { path: path.to_path_buf(), source };
    let schema = |line: usize, message: String| TraceError::Schema { path: path.to_path_buf(), line, message };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut header = None;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut end = None;
    let mut last_line = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i + 1;
        last_line = n;
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        if end.is_some() {
            return Err(schema(n, "content after the end line".into()));
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| schema(n, e.to_string()))?;
        match parsed {
            Line::Header(h) if header.is_none() && steps.is_empty() => header = Some(h),
            Line::Header(_) => return Err(schema(n, "unexpected second header".into())),
            _ if header.is_none() => return Err(schema(n, "the first line must be the header".into())),
            Line::Step(s) => {
                let expected = steps.len() as u32 + 1;
                if s.step_index != expected {
                    return Err(schema(n, format!("step_index {} where {expected} was expected", s.step_index)));
                }
                steps.push(s);
            }
            Line::End(e) => {
                let sum: u64 = steps.iter().map(StepRecord::tokens).sum();
                if e.total_tokens != sum {
                    return Err(schema(n, format!("total_tokens {} but the steps sum to {sum}", e.total_tokens)));
                }
                end = Some(e);
            }
        }
    }
    let header = header.ok_or_else(|| schema(1, "empty trace".into()))?;
    let end = end.ok_or_else(|| schema(last_line, "missing end line".into()))?;
    Ok(Trace { header, steps, end })
}
