//! Aggregates per-task results into the comparison table and heatmap.
//!
//! With a path argument, reads a `results.json` written by `webagent bench`;
//! otherwise uses a small made-up result set.

use webagent::bench::{aggregate, render_heatmap_csv, render_markdown, Category, ScoredResult};

fn demo() -> Vec<ScoredResult> {
    let rows = [
        ("T1", Category::VagueInquiry, true, 41.2, 18_000),
        ("T2", Category::ComplexSearch, false, 95.0, 42_500),
        ("T3", Category::FormCompletion, true, 63.7, 30_250),
    ];
    rows.iter()
        .map(|&(id, category, success, duration_s, tokens)| ScoredResult {
            task_id: id.into(),
            category,
            model_id: "demo-model".into(),
            success,
            steps: 8,
            duration_s,
            input_tokens: tokens - 1_000,
            output_tokens: 1_000,
            total_tokens: tokens,
            failure_reason: (!success).then(|| "answer is missing: 3".into()),
            trace_path: None,
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let results: Vec<ScoredResult> = match std::env::args().nth(1) {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => demo(),
    };
    let model = results.first().map(|r| r.model_id.clone()).ok_or("no results")?;
    let report = aggregate(&results, &model)?;
    print!("{}", render_markdown(std::slice::from_ref(&report))?);
    println!();
    print!("{}", render_heatmap_csv(&[report])?);
    Ok(())
}
