//! Rendering state derived from markup: inline styles, the `hidden`
//! attribute and the browser's own hidden stamp.

use scraper::node::Element;

use super::stamp;

/// Subtrees that never produce rendered content.
pub(crate) const NON_RENDERED: &[&str] = &[
    "head", "script", "style", "template", "noscript", "title", "meta", "link", "base",
];

/// Inherited rendering state while walking down the tree.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Inherited {
    display_none: bool,
    visibility_hidden: bool,
}

impl Inherited {
    /// State for `el`, given its parent's state.
    pub(crate) fn descend(self, el: &Element) -> Inherited {
        let mut next = self;
        if el.attr("hidden").is_some() {
            next.display_none = true;
        }
        if let Some(style) = el.attr("style") {
            for (prop, value) in declarations(style) {
                match prop.as_str() {
                    "display" if value == "none" => next.display_none = true,
                    "visibility" => match value.as_str() {
                        "hidden" | "collapse" => next.visibility_hidden = true,
                        "visible" => next.visibility_hidden = false,
                        _ => {}
                    },
                    _ => {}
                }
            }
        }
        next
    }

    /// Whether an element with this state (and its own attributes) is painted.
    pub(crate) fn rendered(self, el: &Element) -> bool {
        !self.display_none && !self.visibility_hidden && el.attr(stamp::HIDDEN).is_none()
    }

    /// Whether text directly inside an element with this state is painted.
    pub(crate) fn text_rendered(self, el: &Element) -> bool {
        self.rendered(el)
    }
}

/// Lowercased `(property, value)` pairs of an inline style, `!important` dropped.
fn declarations(style: &str) -> impl Iterator<Item = (String, String)> + '_ {
    style.split(';').filter_map(|decl| {
        let (prop, value) = decl.split_once(':')?;
        let value = value.trim().to_ascii_lowercase();
        let value = value.trim_end_matches("!important").trim().to_string();
        Some((prop.trim().to_ascii_lowercase(), value))
    })
}
