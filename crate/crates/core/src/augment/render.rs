use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::MarkSet;
use crate::geom::Rect;
use crate::text::{draw_text, fill_rect, stroke_rect, text_size};

/// Border colours for the standard style, cycled by mark id.
pub const PALETTE: [Rgb<u8>; 12] = [
    Rgb([230, 25, 75]),
    Rgb([60, 180, 75]),
    Rgb([0, 130, 200]),
    Rgb([245, 130, 48]),
    Rgb([145, 30, 180]),
    Rgb([70, 240, 240]),
    Rgb([240, 50, 230]),
    Rgb([210, 245, 60]),
    Rgb([0, 128, 128]),
    Rgb([170, 110, 40]),
    Rgb([128, 0, 0]),
    Rgb([0, 0, 128]),
];

const BORDER: u32 = 2;
const UNIFORM_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
const LABEL_PAD: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkStyle {
    /// Cycled border colours, labels sit above each box and the frame grows
    /// when a label would fall outside it.
    #[default]
    Standard,
    /// One border colour, black-on-white labels inside the box.
    Uniform,
}

/// Where each label goes, in output coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelLayout {
    pub pad_top: u32,
    pub pad_right: u32,
    /// `(mark id, label rect)`; mark rects are shifted down by `pad_top`.
    pub labels: Vec<(u32, Rect)>,
}

#[derive(Debug, Clone)]
pub struct RenderedMarks {
    pub image: RgbImage,
    /// Shift applied to frame coordinates, `(dx, dy)`.
    pub offset: (u32, u32),
}

fn label_box(id: u32) -> (u32, u32) {
    let (tw, th) = text_size(&id.to_string(), 1);
    (tw + 2 * LABEL_PAD, th + 2 * LABEL_PAD)
}

pub fn label_layout(marks: &MarkSet, style: MarkStyle, width: u32) -> LabelLayout {
    match style {
        MarkStyle::Standard => {
            let pad_top = marks.marks.iter().map(|m| label_box(m.id).1.saturating_sub(m.rect.y0)).max().unwrap_or(0);
            let pad_right = marks.marks.iter().map(|m| (m.rect.x0 + label_box(m.id).0).saturating_sub(width)).max().unwrap_or(0);
            let labels = marks
                .marks
                .iter()
                .map(|m| {
                    let (lw, lh) = label_box(m.id);
                    let y1 = m.rect.y0 + pad_top;
                    (m.id, Rect::new(m.rect.x0, y1 - lh, m.rect.x0 + lw, y1))
                })
                .collect();
            LabelLayout { pad_top, pad_right, labels }
        }
        MarkStyle::Uniform => {
            let labels = marks
                .marks
                .iter()
                .map(|m| {
                    let (lw, lh) = label_box(m.id);
                    let r = m.rect;
                    (m.id, Rect::new(r.x0, r.y0, (r.x0 + lw).min(r.x1), (r.y0 + lh).min(r.y1)))
                })
                .collect();
            LabelLayout { pad_top: 0, pad_right: 0, labels }
        }
    }
}

/// Draws numbered boxes over `frame`.
pub fn render_marks(frame: &RgbImage, marks: &MarkSet, style: MarkStyle) -> RenderedMarks {
    let (w, h) = frame.dimensions();
    let layout = label_layout(marks, style, w);
    let mut out = if layout.pad_top == 0 && layout.pad_right == 0 {
        frame.clone()
    } else {
        let mut padded = RgbImage::from_pixel(w + layout.pad_right, h + layout.pad_top, Rgb([255, 255, 255]));
        imageops::replace(&mut padded, frame, 0, layout.pad_top as i64);
        padded
    };
    for (m, (_, label)) in marks.marks.iter().zip(&layout.labels) {
        let rect = m.rect.translate(0, layout.pad_top);
        let text = m.id.to_string();
        match style {
            MarkStyle::Standard => {
                let color = PALETTE[(m.id as usize + PALETTE.len() - 1) % PALETTE.len()];
                stroke_rect(&mut out, rect, BORDER, color);
                fill_rect(&mut out, *label, color);
                draw_text(&mut out, (label.x0 + LABEL_PAD) as i64, (label.y0 + LABEL_PAD) as i64, &text, 1, Rgb([255, 255, 255]), Some(*label));
            }
            MarkStyle::Uniform => {
                stroke_rect(&mut out, rect, BORDER, UNIFORM_COLOR);
                fill_rect(&mut out, *label, Rgb([255, 255, 255]));
                draw_text(&mut out, (label.x0 + LABEL_PAD) as i64, (label.y0 + LABEL_PAD) as i64, &text, 1, Rgb([0, 0, 0]), Some(*label));
            }
        }
    }
    RenderedMarks { image: out, offset: (0, layout.pad_top) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn marks_strategy(w: u32, h: u32) -> impl Strategy<Value = MarkSet> {
        prop::collection::vec((0..w - 1, 0..h - 1, 1u32..60, 1u32..60), 0..30).prop_map(move |v| {
            MarkSet::from_rects(
                v.into_iter()
                    .map(|(x, y, bw, bh)| (Rect::new(x, y, (x + bw).min(w), (y + bh).min(h)), 1.0))
                    .collect(),
            )
        })
    }

    #[test]
    fn empty_marks_leave_frame_unchanged() {
        let img = RgbImage::from_fn(20, 10, |x, y| Rgb([x as u8, y as u8, 0]));
        for style in [MarkStyle::Standard, MarkStyle::Uniform] {
            let out = render_marks(&img, &MarkSet::default(), style);
            assert_eq!(out.image, img);
            assert_eq!(out.offset, (0, 0));
        }
    }

    #[test]
    fn corner_mark_pads_frame() {
        let img = RgbImage::new(40, 40);
        let marks = MarkSet::from_rects(vec![(Rect::new(0, 0, 10, 10), 1.0)]);
        let out = render_marks(&img, &marks, MarkStyle::Standard);
        let layout = label_layout(&marks, MarkStyle::Standard, 40);
        assert_eq!(layout.pad_top, 10);
        assert_eq!(out.image.dimensions(), (40, 50));
        assert!(layout.labels[0].1.fits_in(40, 50));
        // the label text is drawn in the padding
        assert!((0..10).any(|y| (0..10).any(|x| *out.image.get_pixel(x, y) == Rgb([255, 255, 255]))));
    }

    #[test]
    fn right_edge_label_pads_width() {
        let img = RgbImage::new(40, 40);
        let marks = MarkSet::from_rects(vec![(Rect::new(35, 20, 40, 30), 1.0)]);
        let out = render_marks(&img, &marks, MarkStyle::Standard);
        assert_eq!(out.image.dimensions(), (45, 40));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn standard_labels_inside_output(marks in marks_strategy(120, 80)) {
            let img = RgbImage::new(120, 80);
            let out = render_marks(&img, &marks, MarkStyle::Standard);
            let (ow, oh) = out.image.dimensions();
            for (_, r) in label_layout(&marks, MarkStyle::Standard, 120).labels {
                prop_assert!(r.fits_in(ow, oh));
            }
        }

        #[test]
        fn uniform_labels_inside_marks(marks in marks_strategy(120, 80)) {
            let layout = label_layout(&marks, MarkStyle::Uniform, 120);
            for (m, (id, r)) in marks.marks.iter().zip(layout.labels) {
                prop_assert_eq!(m.id, id);
                prop_assert!(m.rect.contains_rect(&r));
            }
        }

        #[test]
        fn rendering_is_pure(marks in marks_strategy(64, 48)) {
            let img = RgbImage::from_fn(64, 48, |x, y| Rgb([(x * 3) as u8, (y * 5) as u8, 9]));
            for style in [MarkStyle::Standard, MarkStyle::Uniform] {
                prop_assert_eq!(render_marks(&img, &marks, style).image, render_marks(&img, &marks, style).image);
            }
        }
    }
}
