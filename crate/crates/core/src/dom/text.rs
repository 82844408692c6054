use ego_tree::NodeRef;
use scraper::{ElementRef, Html, Node};

use super::style::{Inherited, NON_RENDERED};
use super::DomSnapshot;

/// Character cap for element text.
pub const MAX_ELEMENT_TEXT: usize = 200;

const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "details", "div", "dl", "dt",
    "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4", "h5", "h6",
    "header", "hr", "li", "main", "nav", "ol", "p", "pre", "section", "summary", "table", "tbody",
    "td", "tfoot", "th", "thead", "tr", "ul", "option", "label",
];

/// Collapses whitespace, drops control characters and caps the result at
/// `max` characters (the last one becomes `…` when cut).
pub fn normalize_text(raw: &str, max: usize) -> String {
    let mut out = String::with_capacity(raw.len().min(max.saturating_mul(4)));
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() {
            continue;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    if out.chars().count() > max {
        let mut cut: String = out.chars().take(max.saturating_sub(1)).collect();
        cut.truncate(cut.trim_end().len());
        cut.push('…');
        cut
    } else {
        out
    }
}

pub(crate) fn is_block(tag: &str) -> bool {
    BLOCK_TAGS.contains(&tag)
}

/// Rendered text inside `el`, in document order, not normalized.
pub(crate) fn subtree_text(el: ElementRef<'_>, state: Inherited, out: &mut String) {
    collect(*el, state, out, false);
}

fn collect(node: NodeRef<'_, Node>, state: Inherited, out: &mut String, block_breaks: bool) {
    for child in node.children() {
        match child.value() {
            Node::Text(t) => {
                if let Some(parent) = node.value().as_element() {
                    if !state.text_rendered(parent) {
                        continue;
                    }
                }
                out.push_str(t);
            }
            Node::Element(el) => {
                let tag = el.name();
                if NON_RENDERED.contains(&tag) {
                    continue;
                }
                let child_state = state.descend(el);
                let block = is_block(tag);
                if block {
                    out.push(if block_breaks { '\n' } else { ' ' });
                }
                collect(child, child_state, out, block_breaks);
                if block {
                    out.push(if block_breaks { '\n' } else { ' ' });
                }
            }
            _ => {}
        }
    }
}

/// Visible page text with block structure kept as line breaks.
pub fn visible_text(snapshot: &DomSnapshot) -> String {
    let doc = Html::parse_document(&snapshot.html);
    let root = doc.root_element();
    let state = Inherited::default().descend(root.value());
    let mut raw = String::new();
    if state.rendered(root.value()) {
        collect(*root, state, &mut raw, true);
    }
    raw.lines()
        .map(|line| normalize_text(line, usize::MAX))
        .filter(|line| !line.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
