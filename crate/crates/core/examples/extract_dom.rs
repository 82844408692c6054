//! Extracts interactive elements from an HTML file without a browser.
//!
//! Boxes come from `data-wa-rect="x y w h"` attributes when present, so
//! captured pages and the oracle corpus can be inspected offline.
//!
//! ```text
//! cargo run --example extract_dom -- tests/fixtures/dom/06_aria_widgets.html
//! ```

use webagent::dom::{extract_interactive_elements, parse_snapshot, serialize_for_llm, ScrollOffset, Viewport};

const DEMO: &str = r#"<html><body>
<nav><a href="/" data-wa-rect="0 0 80 20">Home</a><a href="/help" data-wa-rect="90 0 80 20">Help</a></nav>
<form>
  <input name="q" placeholder="Search" data-wa-rect="0 40 200 24">
  <button type="submit" data-wa-rect="210 40 60 24">Go</button>
  <input type="hidden" name="token" value="x">
</form>
<div role="button" aria-disabled="true" data-wa-rect="0 80 100 20">Archived</div>
</body></html>"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (html, url) = match std::env::args().nth(1) {
        Some(path) => (std::fs::read_to_string(&path)?, format!("file://{path}")),
        None => (DEMO.to_string(), "http://demo.local/".to_string()),
    };
    let snapshot = parse_snapshot(&html, &url, Viewport::default(), ScrollOffset::default())?;
    let registry = extract_interactive_elements(&snapshot);
    println!("{}", serialize_for_llm(&registry, &snapshot, 20_000)?);
    println!();
    println!("{}", serde_json::to_string_pretty(&registry.elements)?);
    Ok(())
}
