//! Fixed 8x8 bitmap text, used for labels, tooltips and grid coordinates.

use font8x8::legacy::BASIC_LEGACY;
use image::{Rgb, RgbImage};

use crate::geom::Rect;

pub const GLYPH: u32 = 8;

/// Pixel size of `text` rendered at `scale`.
pub fn text_size(text: &str, scale: u32) -> (u32, u32) {
    (text.chars().count() as u32 * GLYPH * scale, GLYPH * scale)
}

fn glyph(c: char) -> [u8; 8] {
    let code = c as usize;
    if code < 128 {
        BASIC_LEGACY[code]
    } else {
        BASIC_LEGACY['?' as usize]
    }
}

/// Draws `text` with its top-left corner at (`x`, `y`), which may lie off
/// the image. Only pixels inside `clip` (and the image) are written.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, color: Rgb<u8>, clip: Option<Rect>) {
    let bounds = Rect::full(img.width(), img.height());
    let clip = clip.and_then(|c| c.intersection(&bounds)).unwrap_or(bounds);
    for (i, c) in text.chars().enumerate() {
        let g = glyph(c);
        let gx = x + (i as u32 * GLYPH * scale) as i64;
        for (row, bits) in g.iter().enumerate() {
            for col in 0..8 {
                if bits & (1 << col) == 0 {
                    continue;
                }
                for sy in 0..scale {
                    for sx in 0..scale {
                        let px = gx + (col * scale + sx) as i64;
                        let py = y + (row as u32 * scale + sy) as i64;
                        if px >= 0 && py >= 0 && clip.contains(px as u32, py as u32) {
                            img.put_pixel(px as u32, py as u32, color);
                        }
                    }
                }
            }
        }
    }
}

/// Fills `rect` clipped to the image.
pub fn fill_rect(img: &mut RgbImage, rect: Rect, color: Rgb<u8>) {
    if let Some(r) = rect.intersection(&Rect::full(img.width(), img.height())) {
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Draws a `thickness`-pixel border just inside `rect`.
pub fn stroke_rect(img: &mut RgbImage, rect: Rect, thickness: u32, color: Rgb<u8>) {
    let t = thickness.min(rect.width()).min(rect.height());
    fill_rect(img, Rect::new(rect.x0, rect.y0, rect.x1, rect.y0 + t), color);
    fill_rect(img, Rect::new(rect.x0, rect.y1 - t, rect.x1, rect.y1), color);
    fill_rect(img, Rect::new(rect.x0, rect.y0, rect.x0 + t, rect.y1), color);
    fill_rect(img, Rect::new(rect.x1 - t, rect.y0, rect.x1, rect.y1), color);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_is_clipped() {
        let mut img = RgbImage::new(10, 10);
        draw_text(&mut img, -4, -4, "88", 1, Rgb([255, 0, 0]), None);
        draw_text(&mut img, 0, 0, "A", 1, Rgb([0, 255, 0]), Some(Rect::new(0, 0, 2, 2)));
        let lit_outside_clip = (0..10).flat_map(|y| (0..10).map(move |x| (x, y))).any(|(x, y)| {
            (x >= 2 || y >= 2) && *img.get_pixel(x, y) == Rgb([0, 255, 0])
        });
        assert!(!lit_outside_clip);
        assert!(img.pixels().any(|p| *p == Rgb([255, 0, 0])));
    }

    #[test]
    fn sizes() {
        assert_eq!(text_size("12", 1), (16, 8));
        assert_eq!(text_size("abc", 2), (48, 16));
    }
}
