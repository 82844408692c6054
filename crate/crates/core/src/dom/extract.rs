use std::collections::HashSet;

use indexmap::IndexMap;
use scraper::{ElementRef, Html};

use super::stamp::{self, parse_numbers};
use super::style::{Inherited, NON_RENDERED};
use super::text::{normalize_text, subtree_text, MAX_ELEMENT_TEXT};
use super::{BoundingBox, DomError, DomSnapshot, ElementRegistry, ElementRole, InteractiveElement};

/// Attributes copied onto registry entries, in output order.
pub(crate) const ATTRIBUTE_ALLOWLIST: &[&str] = &[
    "id",
    "name",
    "type",
    "placeholder",
    "aria-label",
    "href",
    "value",
    "alt",
    "title",
    "role",
];

const ARIA_INTERACTIVE: &[&str] = &[
    "button", "link", "checkbox", "radio", "tab", "menuitem", "combobox", "option",
];

const DISABLEABLE: &[&str] = &["button", "input", "select", "textarea", "option", "optgroup", "fieldset"];

struct Candidate {
    tag: String,
    role: ElementRole,
    text: String,
    attributes: IndexMap<String, String>,
    bbox: BoundingBox,
    enabled: bool,
    node_ref: Option<u64>,
    ancestors: Vec<usize>,
    dropped: bool,
}

/// Finds every rendered, enabled interactive element and numbers them 1..N
/// in document order.
pub fn extract_interactive_elements(snapshot: &DomSnapshot) -> ElementRegistry {
    let doc = Html::parse_document(&snapshot.html);
    let mut candidates = Vec::new();
    let mut stack = Vec::new();
    walk(doc.root_element(), Inherited::default(), false, &mut stack, &mut candidates);

    // Nested clickables: an ancestor whose box and text match a descendant is redundant.
    for i in 0..candidates.len() {
        let ancestors = candidates[i].ancestors.clone();
        for a in ancestors {
            if candidates[a].bbox.contains(&candidates[i].bbox) && candidates[a].text == candidates[i].text {
                candidates[a].dropped = true;
            }
        }
    }

    let viewport = BoundingBox::new(
        snapshot.scroll_offset.x as f64,
        snapshot.scroll_offset.y as f64,
        snapshot.viewport.width as f64,
        snapshot.viewport.height as f64,
    );
    let mut seen = HashSet::new();
    let mut elements = Vec::new();
    for c in candidates.into_iter().filter(|c| !c.dropped) {
        let key = (
            c.tag.clone(),
            c.text.clone(),
            c.bbox.x.to_bits(),
            c.bbox.y.to_bits(),
            c.bbox.width.to_bits(),
            c.bbox.height.to_bits(),
        );
        if !seen.insert(key) {
            continue;
        }
        elements.push(InteractiveElement {
            index: elements.len() + 1,
            in_viewport: c.bbox.intersects(&viewport),
            tag_name: c.tag,
            role: c.role,
            text: c.text,
            attributes: c.attributes,
            bounding_box: c.bbox,
            enabled: c.enabled,
            node_ref: c.node_ref,
        });
    }

    ElementRegistry {
        snapshot_ref: snapshot.id.clone(),
        scroll_offset: snapshot.scroll_offset,
        elements,
    }
}

fn walk(
    el: ElementRef<'_>,
    parent_state: Inherited,
    in_disabled_fieldset: bool,
    stack: &mut Vec<usize>,
    out: &mut Vec<Candidate>,
) {
    let node = el.value();
    let tag = node.name();
    if NON_RENDERED.contains(&tag) {
        return;
    }
    let state = parent_state.descend(node);
    let natively_disabled =
        DISABLEABLE.contains(&tag) && (node.attr("disabled").is_some() || in_disabled_fieldset);

    let mut pushed = false;
    if let Some(role) = classify(el) {
        if state.rendered(node) && !natively_disabled {
            if let Some(bbox) = node.attr(stamp::RECT).and_then(parse_numbers::<4>) {
                let bbox = BoundingBox::new(bbox[0], bbox[1], bbox[2], bbox[3]);
                if bbox.width > 0.0 && bbox.height > 0.0 {
                    out.push(Candidate {
                        tag: tag.to_string(),
                        role,
                        text: element_text(el, state),
                        attributes: allowed_attributes(el),
                        bbox,
                        enabled: !node
                            .attr("aria-disabled")
                            .is_some_and(|v| v.trim().eq_ignore_ascii_case("true")),
                        node_ref: node.attr(stamp::NODE).and_then(|v| v.trim().parse().ok()),
                        ancestors: stack.clone(),
                        dropped: false,
                    });
                    stack.push(out.len() - 1);
                    pushed = true;
                }
            }
        }
    }

    let disabled_fieldset = in_disabled_fieldset || (tag == "fieldset" && node.attr("disabled").is_some());
    for child in el.children().filter_map(ElementRef::wrap) {
        walk(child, state, disabled_fieldset, stack, out);
    }
    if pushed {
        stack.pop();
    }
}

/// Interactivity rules: native controls, ARIA widget roles, inline click handlers.
fn classify(el: ElementRef<'_>) -> Option<ElementRole> {
    let node = el.value();
    let tag = node.name();
    let native = match tag {
        "a" if node.attr("href").is_some() => Some(ElementRole::Link),
        "button" => Some(ElementRole::Button),
        "input" => {
            let kind = node.attr("type").unwrap_or("text").trim().to_ascii_lowercase();
            match kind.as_str() {
                "hidden" => return None,
                "checkbox" => Some(ElementRole::Checkbox),
                "radio" => Some(ElementRole::Radio),
                "date" | "datetime-local" | "month" | "week" | "time" => Some(ElementRole::DatePicker),
                "submit" | "button" | "reset" | "image" => Some(ElementRole::Button),
                "file" | "range" | "color" => Some(ElementRole::OtherClickable),
                _ => Some(ElementRole::TextInput),
            }
        }
        "select" => Some(ElementRole::Select),
        "textarea" => Some(ElementRole::TextInput),
        "summary" => Some(ElementRole::Button),
        _ => None,
    };
    if native == Some(ElementRole::TextInput) {
        return native;
    }
    let aria = node
        .attr("role")
        .and_then(|r| r.split_whitespace().next())
        .map(|r| r.to_ascii_lowercase())
        .filter(|r| ARIA_INTERACTIVE.contains(&r.as_str()))
        .map(|r| match r.as_str() {
            "button" => ElementRole::Button,
            "link" => ElementRole::Link,
            "checkbox" => ElementRole::Checkbox,
            "radio" => ElementRole::Radio,
            "combobox" => ElementRole::Select,
            _ => ElementRole::OtherClickable,
        });
    aria.or(native).or_else(|| {
        node.attr("onclick")
            .map(|_| ElementRole::OtherClickable)
    })
}

fn element_text(el: ElementRef<'_>, state: Inherited) -> String {
    let node = el.value();
    let raw = match node.name() {
        "input" => {
            let kind = node.attr("type").unwrap_or("text").to_ascii_lowercase();
            if matches!(kind.as_str(), "submit" | "button" | "reset") {
                node.attr("value").unwrap_or_default().to_string()
            } else {
                String::new()
            }
        }
        "select" => {
            let options: Vec<ElementRef<'_>> = el
                .descendants()
                .filter_map(ElementRef::wrap)
                .filter(|e| e.value().name() == "option")
                .collect();
            let chosen = options
                .iter()
                .find(|o| o.value().attr("selected").is_some())
                .or_else(|| options.first());
            chosen.map(|o| o.text().collect::<String>()).unwrap_or_default()
        }
        _ => {
            let mut buf = String::new();
            subtree_text(el, state, &mut buf);
            buf
        }
    };
    normalize_text(&raw, MAX_ELEMENT_TEXT)
}

fn allowed_attributes(el: ElementRef<'_>) -> IndexMap<String, String> {
    let node = el.value();
    ATTRIBUTE_ALLOWLIST
        .iter()
        .filter_map(|name| {
            node.attr(name)
                .map(|v| (name.to_string(), normalize_text(v, MAX_ELEMENT_TEXT)))
        })
        .collect()
}

/// Looks up an element by the number the LLM saw.
pub fn resolve_index(registry: &ElementRegistry, index: i64) -> Result<&InteractiveElement, DomError> {
    if index < 1 || index as usize > registry.elements.len() {
        return Err(DomError::UnknownIndex {
            index,
            len: registry.elements.len(),
        });
    }
    Ok(&registry.elements[index as usize - 1])
}
