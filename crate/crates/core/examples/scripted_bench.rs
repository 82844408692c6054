//! Runs the default suite against the local fixture site with the bundled replay scripts,
//! then prints the report table.

use webagent::bench::{aggregate, default_suite, render_markdown, run_suite, BrowserPool, ScriptDir, SuiteOptions};
use webagent::browser::SessionConfig;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let parallelism = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let suite = default_suite();
    let pool = BrowserPool::start(SessionConfig::default()).await?;
    let backends = ScriptDir::embedded("scripted");
    let out = tempfile::tempdir()?;
    let options = SuiteOptions {
        parallelism,
        out_dir: Some(out.path().to_path_buf()),
        ..SuiteOptions::default()
    };
    let results = run_suite(&suite, &pool, &backends, &options).await;
    pool.close().await;
    for r in &results {
        println!(
            "{:<10} {:<5} steps={:<2} tokens={:<6} {}",
            r.task_id,
            if r.success { "pass" } else { "FAIL" },
            r.steps,
            r.total_tokens,
            r.failure_reason.as_deref().unwrap_or("")
        );
    }
    let report = aggregate(&results, "scripted")?;
    println!("\n{}", render_markdown(&[report])?);
    Ok(())
}
