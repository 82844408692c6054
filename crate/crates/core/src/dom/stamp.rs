//! Attribute names the capture script writes onto its serialized copy of
//! the DOM. The live page is never modified; only the clone carries them.

/// On `<html>`: `"<scrollWidth> <scrollHeight>"` of the document.
pub const DOC_SIZE: &str = "data-wa-doc";
/// On `<html>`: `"<width> <height>"` of the viewport at capture time.
pub const VIEWPORT: &str = "data-wa-viewport";
/// On `<html>`: `"<scrollX> <scrollY>"` at capture time.
pub const SCROLL: &str = "data-wa-scroll";
/// On candidate elements: `"<x> <y> <width> <height>"` in document coordinates.
pub const RECT: &str = "data-wa-rect";
/// On any element the browser reports as not rendered.
pub const HIDDEN: &str = "data-wa-hidden";
/// On candidate elements: key into the page-side node table.
pub const NODE: &str = "data-wa-node";

pub fn is_stamp(name: &str) -> bool {
    name.starts_with("data-wa-")
}

/// Parses a whitespace-separated list of numbers, e.g. a rect or size stamp.
pub(crate) fn parse_numbers<const N: usize>(value: &str) -> Option<[f64; N]> {
    let mut out = [0.0; N];
    let mut parts = value.split_whitespace();
    for slot in out.iter_mut() {
        let v: f64 = parts.next()?.parse().ok()?;
        if !v.is_finite() {
            return None;
        }
        *slot = v;
    }
    if parts.next().is_some() {
        return None;
    }
    Some(out)
}
