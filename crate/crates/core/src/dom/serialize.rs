use std::fmt::Write;

use super::{DomError, DomSnapshot, ElementRegistry, InteractiveElement};

/// Smallest accepted character budget for [`serialize_for_llm`].
pub const MIN_SERIALIZATION_BUDGET: usize = 500;

const MAX_HEADER_URL: usize = 300;

/// Renders page state as text for the model, never longer than `budget`
/// characters. Elements are dropped from the end when space runs out.
pub fn serialize_for_llm(
    registry: &ElementRegistry,
    snapshot: &DomSnapshot,
    budget: usize,
) -> Result<String, DomError> {
    if budget < MIN_SERIALIZATION_BUDGET {
        return Err(DomError::BudgetTooSmall {
            budget,
            min: MIN_SERIALIZATION_BUDGET,
        });
    }
    let header = header_line(snapshot);
    if registry.is_empty() {
        return Ok(format!("{header}\n(no interactive elements)"));
    }

    let lines: Vec<String> = registry.iter().map(element_line).collect();
    let lengths: Vec<usize> = lines.iter().map(|l| l.chars().count()).collect();
    let header_len = header.chars().count();
    let full_len = header_len + lengths.iter().map(|l| l + 1).sum::<usize>();
    if full_len <= budget {
        return Ok(std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n"));
    }

    let total = lines.len();
    let mut kept = 0;
    let mut used = header_len;
    for (i, len) in lengths.iter().enumerate() {
        let trailer = trailer_line(total - (i + 1)).chars().count();
        if used + 1 + len + 1 + trailer > budget {
            break;
        }
        used += 1 + len;
        kept = i + 1;
    }
    let mut out = header;
    for line in &lines[..kept] {
        out.push('\n');
        out.push_str(line);
    }
    out.push('\n');
    out.push_str(&trailer_line(total - kept));
    Ok(out)
}

fn trailer_line(remaining: usize) -> String {
    format!("... {remaining} more elements truncated")
}

fn header_line(snapshot: &DomSnapshot) -> String {
    let url: String = if snapshot.url.chars().count() > MAX_HEADER_URL {
        let mut u: String = snapshot.url.chars().take(MAX_HEADER_URL - 1).collect();
        u.push('…');
        u
    } else {
        snapshot.url.clone()
    };
    format!(
        "Page: {url} | scroll x={} y={} | {}px above, {}px below",
        snapshot.scroll_offset.x, snapshot.scroll_offset.y, snapshot.pixels_above, snapshot.pixels_below
    )
}

pub(crate) fn element_line(el: &InteractiveElement) -> String {
    let mut line = format!("[{}]<{} {}>", el.index, el.tag_name, el.role);
    if !el.text.is_empty() {
        line.push(' ');
        line.push_str(&el.text);
    }
    if !el.attributes.is_empty() {
        line.push_str(" {");
        for (i, (k, v)) in el.attributes.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{k}=\"{}\"", v.replace('"', "'"));
        }
        line.push('}');
    }
    line
}
