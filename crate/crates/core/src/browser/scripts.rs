//! Page-side functions. Each constant is a JS function expression that is
//! invoked as `(<fn>)(<json args>)` through `Runtime.evaluate`.

use serde_json::Value;

pub(crate) fn call(function: &str, args: &Value) -> String {
    format!("({function})({args})")
}

/// Clones the document into an inert document, stamps layout data on the
/// clone and returns its HTML. With `register`, candidate nodes are kept in
/// a page-side table for later actions and the capture generation advances.
pub(crate) const CAPTURE: &str = r#"function (opts) {
  const live = document.documentElement;
  if (!live) return null;
  const CAND = 'a[href],button,input,select,textarea,summary,[role],[onclick]';
  const SKIP = new Set(['HEAD','SCRIPT','STYLE','META','LINK','TITLE','TEMPLATE','NOSCRIPT','BASE']);
  const inert = document.implementation.createHTMLDocument('');
  const clone = inert.importNode(live, true);
  const liveAll = [live, ...live.querySelectorAll('*')];
  const cloneAll = [clone, ...clone.querySelectorAll('*')];
  const sx = window.scrollX, sy = window.scrollY;
  const round = v => Math.round(v * 100) / 100;
  const nodes = [];
  const n = Math.min(liveAll.length, cloneAll.length);
  for (let i = 0; i < n; i++) {
    const el = liveAll[i], c = cloneAll[i];
    if (SKIP.has(el.tagName) || el.closest('head')) continue;
    if (typeof el.checkVisibility === 'function' && el !== live && el !== document.body) {
      const visible = el.checkVisibility({ visibilityProperty: true });
      if (!visible && getComputedStyle(el).display !== 'contents') c.setAttribute('data-wa-hidden', '1');
    }
    if (el.matches(CAND)) {
      const r = el.getBoundingClientRect();
      c.setAttribute('data-wa-rect', [r.left + sx, r.top + sy, r.width, r.height].map(round).join(' '));
      if (opts.register) {
        c.setAttribute('data-wa-node', String(nodes.length));
        nodes.push(el);
      }
    }
    const tag = el.tagName;
    if (tag === 'INPUT') {
      const t = (el.type || '').toLowerCase();
      if (t === 'checkbox' || t === 'radio') {
        if (el.checked) c.setAttribute('checked', ''); else c.removeAttribute('checked');
      } else if (t !== 'file' && t !== 'password') {
        c.setAttribute('value', el.value);
      }
    } else if (tag === 'TEXTAREA') {
      c.textContent = el.value;
    } else if (tag === 'OPTION') {
      if (el.selected) c.setAttribute('selected', ''); else c.removeAttribute('selected');
    }
  }
  const body = document.body;
  const docW = Math.max(live.scrollWidth, body ? body.scrollWidth : 0);
  const docH = Math.max(live.scrollHeight, body ? body.scrollHeight : 0);
  clone.setAttribute('data-wa-doc', docW + ' ' + docH);
  clone.setAttribute('data-wa-viewport', window.innerWidth + ' ' + window.innerHeight);
  clone.setAttribute('data-wa-scroll', Math.round(sx) + ' ' + Math.round(sy));
  if (opts.register) {
    window.__waGen = (window.__waGen || 0) + 1;
    window.__waNodes = nodes;
  }
  return {
    html: '<!DOCTYPE html>' + clone.outerHTML,
    url: location.href,
    title: document.title,
    scrollX: Math.max(0, Math.round(sx)),
    scrollY: Math.max(0, Math.round(sy)),
    gen: window.__waGen || 0
  };
}"#;

/// Shared prelude resolving `(gen, id)` to a live node or an error record.
const LOOKUP: &str = r#"
  if (window.__waGen !== args.gen || !window.__waNodes) return { error: 'stale' };
  const el = window.__waNodes[args.id];
  if (!el || !el.isConnected) return { error: 'stale' };
"#;

fn with_lookup(body: &str) -> String {
    format!("function (args) {{{LOOKUP}{body}}}")
}

/// Scrolls the node into view and returns the point to press. With
/// `hitTest`, fails when another element covers that point.
pub(crate) fn point() -> String {
    with_lookup(
        r#"
  if (args.hitTest && (el.disabled || el.getAttribute('aria-disabled') === 'true'))
    return { error: 'not_interactable', reason: 'element is disabled' };
  el.scrollIntoView({ block: 'center', inline: 'center', behavior: 'instant' });
  const r = el.getBoundingClientRect();
  if (r.width <= 0 || r.height <= 0) return { error: 'not_interactable', reason: 'element has no size' };
  const x = Math.min(Math.max(r.left + r.width / 2, 0), window.innerWidth - 1);
  const y = Math.min(Math.max(r.top + r.height / 2, 0), window.innerHeight - 1);
  if (args.hitTest) {
    const hit = document.elementFromPoint(x, y);
    const ok = hit && (hit === el || el.contains(hit) || (hit.control && hit.control === el)
      || (el.labels && Array.from(el.labels).some(l => l === hit || l.contains(hit))));
    if (!ok) {
      const who = hit ? hit.tagName.toLowerCase() + (hit.id ? '#' + hit.id : '') : 'nothing';
      return { error: 'not_interactable', reason: 'element is covered by ' + who };
    }
  }
  return { x, y };
"#,
    )
}

/// Focuses and clears a text field. Date-like and other non-typeable
/// fields get their value assigned directly (`assigned: true`).
pub(crate) fn input_prepare() -> String {
    with_lookup(
        r#"
  const tag = el.tagName;
  const editable = el.isContentEditable;
  if (tag !== 'INPUT' && tag !== 'TEXTAREA' && !editable)
    return { error: 'not_interactable', reason: '<' + tag.toLowerCase() + '> does not accept text' };
  if (el.disabled || el.readOnly) return { error: 'not_interactable', reason: 'field is disabled or read-only' };
  const t = (el.type || '').toLowerCase();
  if (tag === 'INPUT' && ['checkbox', 'radio', 'submit', 'button', 'reset', 'image', 'file'].includes(t))
    return { error: 'not_interactable', reason: 'input type ' + t + ' does not accept text' };
  el.scrollIntoView({ block: 'center', behavior: 'instant' });
  el.focus();
  const fire = () => {
    el.dispatchEvent(new Event('input', { bubbles: true }));
    el.dispatchEvent(new Event('change', { bubbles: true }));
  };
  if (tag === 'INPUT' && ['date', 'datetime-local', 'month', 'week', 'time', 'color', 'range'].includes(t)) {
    el.value = args.text;
    fire();
    if (el.value !== args.text) return { error: 'not_interactable', reason: 'value ' + JSON.stringify(args.text) + ' rejected by ' + t + ' field' };
    return { assigned: true, value: el.value };
  }
  if (editable) { el.textContent = ''; } else { el.value = ''; }
  el.dispatchEvent(new Event('input', { bubbles: true }));
  return { assigned: false };
"#,
    )
}

pub(crate) fn input_finish() -> String {
    with_lookup(
        r#"
  el.dispatchEvent(new Event('change', { bubbles: true }));
  return { value: el.isContentEditable ? el.textContent : el.value };
"#,
    )
}

pub(crate) fn select_option() -> String {
    with_lookup(
        r#"
  if (el.tagName !== 'SELECT') return { error: 'not_interactable', reason: 'element is not a <select>' };
  if (el.disabled) return { error: 'not_interactable', reason: 'select is disabled' };
  const opts = Array.from(el.options);
  const norm = s => (s || '').replace(/\s+/g, ' ').trim();
  const want = norm(args.text);
  let opt = opts.find(o => norm(o.text) === want)
    || opts.find(o => norm(o.text).toLowerCase() === want.toLowerCase())
    || opts.find(o => o.value === args.text);
  if (!opt) return { error: 'no_option', options: opts.map(o => norm(o.text)) };
  el.value = opt.value;
  opt.selected = true;
  el.dispatchEvent(new Event('input', { bubbles: true }));
  el.dispatchEvent(new Event('change', { bubbles: true }));
  return { chosen: norm(opt.text) };
"#,
    )
}

pub(crate) const SCROLL: &str = r#"function (args) {
  const before = window.scrollY;
  window.scrollBy({ top: args.dy, left: 0, behavior: 'instant' });
  const max = Math.max(document.documentElement.scrollHeight, document.body ? document.body.scrollHeight : 0) - window.innerHeight;
  return { before: Math.round(before), after: Math.round(window.scrollY), max: Math.max(0, Math.round(max)) };
}"#;

pub(crate) const OVERLAY: &str = r#"function (args) {
  const old = document.getElementById('__wa_overlay');
  if (old) old.remove();
  const root = document.createElement('div');
  root.id = '__wa_overlay';
  root.style.cssText = 'position:absolute;left:0;top:0;width:0;height:0;z-index:2147483647;pointer-events:none;';
  for (const m of args.marks) {
    const box = document.createElement('div');
    box.style.cssText = 'position:absolute;box-sizing:border-box;pointer-events:none;'
      + 'left:' + m.x + 'px;top:' + m.y + 'px;width:' + m.w + 'px;height:' + m.h + 'px;'
      + 'border:2px solid ' + m.color + ';';
    const label = document.createElement('div');
    label.textContent = String(m.index);
    label.style.cssText = 'position:absolute;top:-2px;right:-2px;padding:0 3px;'
      + 'font:bold 11px/14px monospace;color:#fff;background:' + m.color + ';';
    box.appendChild(label);
    root.appendChild(box);
  }
  document.documentElement.appendChild(root);
  return new Promise(resolve => requestAnimationFrame(() => requestAnimationFrame(() => resolve(args.marks.length))));
}"#;

pub(crate) const REMOVE_OVERLAY: &str = r#"function () {
  const old = document.getElementById('__wa_overlay');
  if (old) old.remove();
  return true;
}"#;

pub(crate) const SET_MARKER: &str = r#"function (args) { window.__waMarker = args.token; return location.href; }"#;

pub(crate) const PAGE_STATUS: &str = r#"function (args) {
  return { same: window.__waMarker === args.token, ready: document.readyState, url: location.href };
}"#;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dom::stamp;

    #[test]
    fn capture_writes_the_stamps_extraction_reads() {
        for name in [stamp::DOC_SIZE, stamp::VIEWPORT, stamp::SCROLL, stamp::RECT, stamp::HIDDEN, stamp::NODE] {
            assert!(CAPTURE.contains(name), "capture script never writes {name}");
        }
    }

    #[test]
    fn lookup_is_prepended() {
        let f = point();
        assert!(f.starts_with("function (args) {"));
        assert!(f.contains("__waNodes[args.id]"));
        assert!(call(&f, &serde_json::json!({"gen": 1, "id": 2})).ends_with(r#"({"gen":1,"id":2})"#));
    }
}
