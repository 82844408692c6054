//! Set-of-marks drawing on a raster screenshot.

use image::{ImageFormat, Rgba, RgbaImage};

use crate::dom::ElementRegistry;

/// Mark colors, picked by `index % 8`.
pub const PALETTE: [[u8; 3]; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [67, 99, 216],
    [245, 130, 49],
    [145, 30, 180],
    [0, 128, 128],
    [240, 50, 230],
    [154, 99, 36],
];

pub const BORDER_WIDTH: u32 = 2;
const GLYPH_SCALE: u32 = 2;
const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;
const LABEL_PAD: u32 = 2;

/// 3x5 bitmaps for 0-9, one row per byte, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

pub fn palette_color(index: usize) -> [u8; 3] {
    PALETTE[index % PALETTE.len()]
}

/// CSS color string for the in-page overlay.
pub fn palette_css(index: usize) -> String {
    let [r, g, b] = palette_color(index);
    format!("rgb({r},{g},{b})")
}

/// Size of the label box for a given index.
pub fn label_size(index: usize) -> (u32, u32) {
    let digits = index.to_string().len() as u32;
    let w = digits * (GLYPH_W * GLYPH_SCALE) + digits.saturating_sub(1) * GLYPH_SCALE + 2 * LABEL_PAD;
    let h = GLYPH_H * GLYPH_SCALE + 2 * LABEL_PAD;
    (w, h)
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("screenshot is not a decodable image: {0}")]
    Decode(String),
    #[error("cannot encode annotated image: {0}")]
    Encode(String),
}

/// Draws a 2px box and a numbered label (top-right corner) for each
/// in-viewport element. With nothing to draw the input bytes come back as-is.
pub fn annotate_screenshot(png: &[u8], registry: &ElementRegistry) -> Result<Vec<u8>, AnnotateError> {
    if registry.in_viewport().next().is_none() {
        return Ok(png.to_vec());
    }
    let mut img = image::load_from_memory(png)
        .map_err(|e| AnnotateError::Decode(e.to_string()))?
        .to_rgba8();
    let origin = (registry.scroll_offset.x as f64, registry.scroll_offset.y as f64);

    for el in registry.in_viewport() {
        let [r, g, b] = palette_color(el.index);
        let color = Rgba([r, g, b, 255]);
        let bb = &el.bounding_box;
        let x0 = (bb.x - origin.0).round() as i64;
        let y0 = (bb.y - origin.1).round() as i64;
        let x1 = (bb.right() - origin.0).round() as i64 - 1;
        let y1 = (bb.bottom() - origin.1).round() as i64 - 1;
        draw_rect_outline(&mut img, x0, y0, x1.max(x0), y1.max(y0), color);

        let (lw, lh) = label_size(el.index);
        let lx = (x1 + 1 - lw as i64).max(x0.min(x1));
        let ly = y0;
        let (lx, ly) = clamp_into(&img, lx, ly, lw, lh);
        fill_rect(&mut img, lx, ly, lw, lh, color);
        draw_number(&mut img, lx + LABEL_PAD as i64, ly + LABEL_PAD as i64, el.index, Rgba([255, 255, 255, 255]));
    }

    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AnnotateError::Encode(e.to_string()))?;
    Ok(out.into_inner())
}

fn clamp_into(img: &RgbaImage, x: i64, y: i64, w: u32, h: u32) -> (i64, i64) {
    let max_x = img.width() as i64 - w as i64;
    let max_y = img.height() as i64 - h as i64;
    (x.min(max_x).max(0), y.min(max_y).max(0))
}

fn put(img: &mut RgbaImage, x: i64, y: i64, color: Rgba<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn fill_rect(img: &mut RgbaImage, x: i64, y: i64, w: u32, h: u32, color: Rgba<u8>) {
    for dy in 0..h as i64 {
        for dx in 0..w as i64 {
            put(img, x + dx, y + dy, color);
        }
    }
}

fn draw_rect_outline(img: &mut RgbaImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgba<u8>) {
    let t = BORDER_WIDTH as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            if x - x0 < t || x1 - x < t || y - y0 < t || y1 - y < t {
                put(img, x, y, color);
            }
        }
    }
}

fn draw_number(img: &mut RgbaImage, x: i64, y: i64, n: usize, color: Rgba<u8>) {
    let step = ((GLYPH_W + 1) * GLYPH_SCALE) as i64;
    for (i, ch) in n.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x + i as i64 * step;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    let px = gx + (col * GLYPH_SCALE) as i64;
                    let py = y + (row as u32 * GLYPH_SCALE) as i64;
                    fill_rect(img, px, py, GLYPH_SCALE, GLYPH_SCALE, color);
                }
            }
        }
    }
}
