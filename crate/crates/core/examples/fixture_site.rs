//! Starts the fixture site, posts a form the way a browser would, and reads
//! the stored record back from the verification endpoint.

use webagent::fixtures::FixtureServer;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let server = FixtureServer::start_local().await?;
    let http = reqwest::Client::new();
    let page = http
        .post(server.url("/form/submit"))
        .form(&[("full_name", "Alex Martin"), ("postal_code", "H3A0G4"), ("case_type", "Consumer")])
        .send()
        .await?
        .text()
        .await?;
    println!("confirmation page mentions 123-456: {}", page.contains("123-456"));

    let record: serde_json::Value = http.get(server.url("/api/submissions/latest")).send().await?.json().await?;
    println!("{}", serde_json::to_string_pretty(&record)?);
    println!("site files: {}", webagent::fixtures::site_files().join(", "));
    server.shutdown();
    Ok(())
}
