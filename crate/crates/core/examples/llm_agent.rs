//! Runs a query with a real chat-completions endpoint.
//!
//! Needs `WEBAGENT_LLM_API_KEY` and `WEBAGENT_LLM_MODEL`; `WEBAGENT_LLM_BASE_URL`
//! selects another OpenAI-compatible provider.
//!
//! ```text
//! cargo run --example llm_agent -- "How do I contest a parking ticket in Montreal?" https://www.quebec.ca
//! ```

use webagent::agent::{run_task, EpisodeConfig};
use webagent::browser::{open_session, SessionConfig};
use webagent::llm::HttpBackend;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let query = args.next().ok_or("usage: llm_agent QUERY [START_URL]")?;
    let backend = HttpBackend::from_env()?;
    let session = open_session(SessionConfig::default()).await?;
    let config = EpisodeConfig {
        start_url: args.next(),
        step_budget: 25,
        ..EpisodeConfig::default()
    };
    let result = run_task(&query, &session, &backend, &config).await?;
    session.close().await;
    println!("{} after {} steps, {} tokens", result.terminal, result.steps.len(), result.total_tokens);
    println!("{}", result.summary);
    Ok(())
}
