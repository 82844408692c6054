//! Oracle fixtures: `<name>.html` beside `<name>.expected.json`.

use std::path::Path;

use scraper::Html;

use super::stamp::{self, parse_numbers};
use super::{parse_snapshot, DomError, DomSnapshot, InteractiveElement, ScrollOffset, Viewport};

#[derive(Debug, Clone)]
pub struct CorpusCase {
    pub name: String,
    pub snapshot: DomSnapshot,
    pub expected: Vec<InteractiveElement>,
}

/// Loads every fixture pair in `dir`, sorted by name.
///
/// Viewport and scroll come from the capture stamps on `<html>` when
/// present, otherwise 1280x720 at the origin.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusCase>, DomError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| DomError::Corpus(format!("{}: {e}", dir.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|f| f.strip_suffix(".html").map(str::to_string))
        .collect();
    names.sort();

    names
        .into_iter()
        .map(|name| {
            let html_path = dir.join(format!("{name}.html"));
            let json_path = dir.join(format!("{name}.expected.json"));
            let html = std::fs::read(&html_path)
                .map_err(|e| DomError::Corpus(format!("{}: {e}", html_path.display())))?;
            let json = std::fs::read_to_string(&json_path)
                .map_err(|e| DomError::Corpus(format!("{}: {e}", json_path.display())))?;
            let expected: Vec<InteractiveElement> = serde_json::from_str(&json)
                .map_err(|e| DomError::Corpus(format!("{}: {e}", json_path.display())))?;
            let (viewport, scroll) = capture_context(&String::from_utf8_lossy(&html));
            let snapshot = parse_snapshot(&html, &format!("http://fixtures.local/{name}.html"), viewport, scroll)?;
            Ok(CorpusCase {
                name,
                snapshot,
                expected,
            })
        })
        .collect()
}

fn capture_context(html: &str) -> (Viewport, ScrollOffset) {
    let doc = Html::parse_document(html);
    let root = doc.root_element().value();
    let viewport = root
        .attr(stamp::VIEWPORT)
        .and_then(parse_numbers::<2>)
        .map(|[w, h]| Viewport::new(w as u32, h as u32))
        .unwrap_or_default();
    let scroll = root
        .attr(stamp::SCROLL)
        .and_then(parse_numbers::<2>)
        .map(|[x, y]| ScrollOffset::new(x.max(0.0) as u32, y.max(0.0) as u32))
        .unwrap_or_default();
    (viewport, scroll)
}
