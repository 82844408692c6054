//! Prints what the agent sees on a fixture page, optionally after running actions.
//!
//! ```text
//! cargo run --example inspect_page -- /offices.html '{"name":"select_option","index":7,"text":"Consumer"}'
//! ```

use webagent::browser::{open_session, Action, SessionConfig};
use webagent::dom::serialize_for_llm;
use webagent::fixtures::FixtureServer;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "/index.html".into());
    let server = FixtureServer::start_local().await?;
    let session = open_session(SessionConfig::default()).await?;

    let nav = Action::Navigate { url: server.url(&path) };
    let empty = webagent::dom::ElementRegistry {
        snapshot_ref: String::new(),
        scroll_offset: Default::default(),
        elements: vec![],
    };
    session.execute(&nav, &empty).await?;

    for raw in args {
        let state = session.capture_state().await?;
        let action: Action = serde_json::from_str(&raw)?;
        let outcome = session.execute(&action, &state.registry).await?;
        println!("> {raw}\n  {outcome:?}");
    }
    let state = session.capture_state().await?;
    println!("url: {}", state.snapshot.url);
    println!("{}", serialize_for_llm(&state.registry, &state.snapshot, 20_000)?);
    session.close().await;
    server.shutdown();
    Ok(())
}
