use chrono::{DateTime, Utc};
use scraper::Html;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stamp::{self, parse_numbers};
use super::DomError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Viewport {
    pub width: u32,
    pub height: u32,
}

impl Viewport {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn validate(&self) -> Result<(), DomError> {
        if self.width == 0 || self.height == 0 {
            return Err(DomError::InvalidSnapshot(format!(
                "viewport must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

impl Default for Viewport {
    fn default() -> Self {
        Self::new(1280, 720)
    }
}

impl std::fmt::Display for Viewport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl std::str::FromStr for Viewport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
        let width: u32 = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
        let height: u32 = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
        let vp = Viewport::new(width, height);
        vp.validate().map_err(|e| e.to_string())?;
        Ok(vp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ScrollOffset {
    pub x: u32,
    pub y: u32,
}

impl ScrollOffset {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Captured page: serialized DOM plus the viewport geometry it was taken in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomSnapshot {
    /// Content-derived identity; browser captures append a capture generation.
    pub id: String,
    pub url: String,
    pub html: String,
    pub captured_at: DateTime<Utc>,
    pub viewport: Viewport,
    pub scroll_offset: ScrollOffset,
    pub document_height: u32,
    pub pixels_above: u32,
    pub pixels_below: u32,
}

/// Builds a snapshot from raw document bytes.
///
/// Document height comes from the capture stamp on `<html>`; a document
/// without one is taken to be exactly one viewport tall.
pub fn parse_snapshot(
    html: impl AsRef<[u8]>,
    url: &str,
    viewport: Viewport,
    scroll: ScrollOffset,
) -> Result<DomSnapshot, DomError> {
    viewport.validate()?;
    let bytes = html.as_ref();
    if bytes.is_empty() {
        return Err(DomError::InvalidSnapshot("document is empty".into()));
    }
    let html = std::str::from_utf8(bytes)
        .map_err(|e| DomError::MalformedDocument(format!("document is not UTF-8 text: {e}")))?;
    if looks_binary(html) {
        return Err(DomError::MalformedDocument(
            "document contains binary control bytes".into(),
        ));
    }
    url::Url::parse(url)
        .map_err(|e| DomError::InvalidSnapshot(format!("url {url:?} is not absolute: {e}")))?;

    let doc = Html::parse_document(html);
    let root = doc.root_element();
    let document_height = root
        .value()
        .attr(stamp::DOC_SIZE)
        .and_then(parse_numbers::<2>)
        .map(|[_, h]| h.round().max(0.0) as u32)
        .unwrap_or(viewport.height);

    let pixels_above = scroll.y;
    let pixels_below = document_height.saturating_sub(viewport.height.saturating_add(scroll.y));

    Ok(DomSnapshot {
        id: content_id(url, html, viewport, scroll),
        url: url.to_string(),
        html: html.to_string(),
        captured_at: Utc::now(),
        viewport,
        scroll_offset: scroll,
        document_height,
        pixels_above,
        pixels_below,
    })
}

fn looks_binary(text: &str) -> bool {
    text.chars()
        .any(|c| c == '\0' || (c.is_control() && !matches!(c, '\n' | '\r' | '\t' | '\x0c')))
}

fn content_id(url: &str, html: &str, viewport: Viewport, scroll: ScrollOffset) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update([0]);
    hasher.update(html.as_bytes());
    hasher.update([0]);
    hasher.update(format!("{viewport}@{},{}", scroll.x, scroll.y).as_bytes());
    hex::encode(&hasher.finalize()[..8])
}
