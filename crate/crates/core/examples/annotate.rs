//! Draws numbered marks onto a screenshot, the raster fallback used when
//! the live overlay cannot be injected.
//!
//! ```text
//! cargo run --example annotate -- marked.png
//! ```

use webagent::browser::annotate_screenshot;
use webagent::dom::{extract_interactive_elements, parse_snapshot, ScrollOffset, Viewport};

const PAGE: &str = r#"<html><body>
<a href="/a" data-wa-rect="60 60 160 40">Link</a>
<button data-wa-rect="400 60 160 40">Button</button>
<input name="q" data-wa-rect="60 300 160 40">
<select name="s" data-wa-rect="400 300 160 40"><option>One</option></select>
</body></html>"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "marked.png".into());
    let viewport = Viewport::new(640, 480);
    let snapshot = parse_snapshot(PAGE, "http://demo.local/", viewport, ScrollOffset::default())?;
    let registry = extract_interactive_elements(&snapshot);

    let blank = image::RgbaImage::from_pixel(viewport.width, viewport.height, image::Rgba([255, 255, 255, 255]));
    let mut png = std::io::Cursor::new(Vec::new());
    blank.write_to(&mut png, image::ImageFormat::Png)?;

    let marked = annotate_screenshot(png.get_ref(), &registry)?;
    std::fs::write(&out, marked)?;
    println!("{} marks drawn into {out}", registry.in_viewport().count());
    Ok(())
}
