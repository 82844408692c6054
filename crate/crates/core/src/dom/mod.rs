//! Page perception from captured HTML.
//!
//! A [`DomSnapshot`] is the browser's serialized DOM with layout data
//! stamped onto it at capture time (see [`stamp`]). Everything in this
//! module is a pure function of a snapshot: extraction, LLM serialization
//! and visible-text rendering never talk to a browser.

mod corpus;
mod extract;
mod serialize;
mod snapshot;
pub mod stamp;
mod style;
mod text;

pub use corpus::{load_corpus, CorpusCase};
pub use extract::{extract_interactive_elements, resolve_index};
pub use serialize::{serialize_for_llm, MIN_SERIALIZATION_BUDGET};
pub use snapshot::{parse_snapshot, DomSnapshot, ScrollOffset, Viewport};
pub use text::{normalize_text, visible_text, MAX_ELEMENT_TEXT};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("serialization budget {budget} is below the minimum of {min} characters")]
    BudgetTooSmall { budget: usize, min: usize },
    #[error("unknown element index {index}; the page has {len} tagged elements")]
    UnknownIndex { index: i64, len: usize },
    #[error("fixture corpus: {0}")]
    Corpus(String),
}

/// Semantic kind of an interactive element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementRole {
    Link,
    Button,
    TextInput,
    Select,
    Checkbox,
    Radio,
    DatePicker,
    OtherClickable,
}

impl ElementRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementRole::Link => "link",
            ElementRole::Button => "button",
            ElementRole::TextInput => "text-input",
            ElementRole::Select => "select",
            ElementRole::Checkbox => "checkbox",
            ElementRole::Radio => "radio",
            ElementRole::DatePicker => "date-picker",
            ElementRole::OtherClickable => "other-clickable",
        }
    }
}

impl std::fmt::Display for ElementRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned box in CSS pixels, relative to the document origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub fn area(&self) -> f64 {
        self.width.max(0.0) * self.height.max(0.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    /// True when `other` lies entirely inside `self` (edges may touch).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.x < other.right()
            && other.x < self.right()
            && self.y < other.bottom()
            && other.y < self.bottom()
    }
}

/// One tagged element, addressed by the LLM through its 1-based `index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveElement {
    pub index: usize,
    pub tag_name: String,
    pub role: ElementRole,
    pub text: String,
    pub attributes: IndexMap<String, String>,
    pub bounding_box: BoundingBox,
    pub in_viewport: bool,
    pub enabled: bool,
    /// Capture-time handle of the live node; only present for browser captures.
    #[serde(skip)]
    pub node_ref: Option<u64>,
}

/// Interactive elements of one snapshot, in document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRegistry {
    pub snapshot_ref: String,
    /// Scroll position of the originating snapshot; needed to map boxes onto the viewport.
    pub scroll_offset: ScrollOffset,
    pub elements: Vec<InteractiveElement>,
}

impl ElementRegistry {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InteractiveElement> {
        self.elements.iter()
    }

    pub fn in_viewport(&self) -> impl Iterator<Item = &InteractiveElement> {
        self.elements.iter().filter(|e| e.in_viewport)
    }
}
