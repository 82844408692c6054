//! One complete episode with canned model replies: open the intake form,
//! fill it in, submit, and report the confirmation number. The trace is
//! written to a temporary directory and printed as a digest.

use serde_json::json;
use webagent::agent::{read_trace, run_task, EpisodeConfig};
use webagent::browser::{open_session, SessionConfig};
use webagent::fixtures::FixtureServer;
use webagent::llm::ScriptedBackend;

fn turn(v: serde_json::Value) -> String {
    v.to_string()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = FixtureServer::start_local().await?;
    let session = open_session(SessionConfig::default()).await?;
    let backend = ScriptedBackend::from_replies([
        turn(json!({"parsed_intent": "Submit the application form", "steps": ["Open the form", "Fill in and submit"], "constraints": []})),
        turn(json!({"evaluation": "", "memory": "", "next_goal": "Open the form", "actions": [{"name": "click", "index": 12}]})),
        turn(json!({"evaluation": "Form open", "memory": "", "next_goal": "Fill in and submit", "actions": [
            {"name": "input", "index": 7, "text": "Alex Martin"},
            {"name": "input", "index": 9, "text": "H3A0G4"},
            {"name": "click", "index": 12}
        ]})),
        turn(json!({"evaluation": "Submitted", "memory": "", "next_goal": "Report", "actions": [
            {"name": "done", "success": true, "answer": "Submitted; confirmation number 123-456."}
        ]})),
        "Your application was submitted. Keep confirmation number 123-456.".to_string(),
    ]);
    let dir = tempfile::tempdir()?;
    let config = EpisodeConfig {
        start_url: Some(server.url("/index.html")),
        trace_dir: Some(dir.path().to_path_buf()),
        ..EpisodeConfig::default()
    };
    let result = run_task(
        "Apply online for Alex Martin, postal code H3A0G4",
        &session,
        &backend,
        &config,
    )
    .await?;
    session.close().await;

    print!("{}", read_trace(result.trace_path.as_deref().expect("trace written"))?.digest());
    println!("summary: {}", result.summary);
    println!("stored: {:?}", server.submissions().last().map(|s| &s.form_fields));
    Ok(())
}
