use image::RgbImage;

use super::{AugmentError, MarkSet};
use crate::geom::Rect;

/// A candidate region from a segmenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub rect: Rect,
    pub score: f64,
}

/// Source of region proposals. A learned segmentation model plugs in here;
/// [`ComponentSegmenter`] is the built-in deterministic implementation.
pub trait Segmenter {
    fn propose(&self, image: &RgbImage) -> Result<Vec<Proposal>, AugmentError>;
}

/// Colour-quantized connected components, 8-connected.
///
/// Components whose bounding box covers the whole frame are treated as
/// background and dropped. The score is the component's fill ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentSegmenter {
    pub quant_step: u8,
    pub min_area: u64,
}

impl Default for ComponentSegmenter {
    fn default() -> Self {
        Self { quant_step: 32, min_area: 1 }
    }
}

impl Segmenter for ComponentSegmenter {
    fn propose(&self, image: &RgbImage) -> Result<Vec<Proposal>, AugmentError> {
        let (w, h) = image.dimensions();
        let step = self.quant_step.max(1) as u32;
        let class: Vec<u32> = image
            .pixels()
            .map(|p| {
                let q = |v: u8| v as u32 / step;
                (q(p[0]) << 16) | (q(p[1]) << 8) | q(p[2])
            })
            .collect();
        let mut seen = vec![false; class.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..class.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let c = class[start];
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
            let mut count: u64 = 0;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i as u32) % w, (i as u32) / w);
                count += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = (ny as u32 * w + nx as u32) as usize;
                        if !seen[j] && class[j] == c {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
            let rect = Rect::new(x0, y0, x1, y1);
            if rect == Rect::full(w, h) || count < self.min_area {
                continue;
            }
            out.push(Proposal { rect, score: count as f64 / rect.area() as f64 });
        }
        Ok(out)
    }
}

/// IoU above which two proposals count as the same element.
const MERGE_IOU: f64 = 0.9;

/// Runs the segmenter and turns its proposals into a numbered mark set.
///
/// Proposals are clipped to the frame, near-duplicates (IoU > 0.9) are merged
/// keeping the higher score, and the survivors are numbered in reading order.
pub fn segment_to_marks(frame: &RgbImage, segmenter: &dyn Segmenter) -> Result<MarkSet, AugmentError> {
    let bounds = Rect::full(frame.width(), frame.height());
    let mut proposals: Vec<Proposal> = segmenter
        .propose(frame)?
        .into_iter()
        .filter_map(|p| p.rect.intersection(&bounds).map(|rect| Proposal { rect, ..p }))
        .collect();
    proposals.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.rect.cmp(&b.rect)));
    let mut kept: Vec<Proposal> = Vec::new();
    for p in proposals {
        if kept.iter().all(|k| k.rect.iou(&p.rect) <= MERGE_IOU) {
            kept.push(p);
        }
    }
    Ok(MarkSet::from_rects(kept.into_iter().map(|p| (p.rect, p.score)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    struct Fixed(Vec<Proposal>);

    impl Segmenter for Fixed {
        fn propose(&self, _: &RgbImage) -> Result<Vec<Proposal>, AugmentError> {
            Ok(self.0.clone())
        }
    }

    struct Broken;

    impl Segmenter for Broken {
        fn propose(&self, _: &RgbImage) -> Result<Vec<Proposal>, AugmentError> {
            Err(AugmentError::SegmenterFailure("model offline".into()))
        }
    }

    #[test]
    fn blank_frame_has_no_marks() {
        let img = RgbImage::from_pixel(30, 20, Rgb([40, 40, 40]));
        assert!(segment_to_marks(&img, &ComponentSegmenter::default()).unwrap().is_empty());
    }

    #[test]
    fn three_rectangles_match_brute_force_labeling() {
        let rects = [Rect::new(2, 3, 10, 8), Rect::new(20, 2, 25, 15), Rect::new(5, 12, 14, 18)];
        let colors = [Rgb([250, 0, 0]), Rgb([0, 250, 0]), Rgb([0, 0, 250])];
        let mut img = RgbImage::from_pixel(30, 20, Rgb([0, 0, 0]));
        for (r, c) in rects.iter().zip(colors) {
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    img.put_pixel(x, y, c);
                }
            }
        }
        // Oracle: for each distinct non-background colour, the bounding box of
        // every pixel with that colour (the rectangles are disjoint and convex).
        let mut oracle: Vec<Rect> = colors
            .iter()
            .map(|c| {
                let pts: Vec<(u32, u32)> = img.enumerate_pixels().filter(|(_, _, p)| *p == c).map(|(x, y, _)| (x, y)).collect();
                let x0 = pts.iter().map(|p| p.0).min().unwrap();
                let y0 = pts.iter().map(|p| p.1).min().unwrap();
                let x1 = pts.iter().map(|p| p.0).max().unwrap() + 1;
                let y1 = pts.iter().map(|p| p.1).max().unwrap() + 1;
                Rect::new(x0, y0, x1, y1)
            })
            .collect();
        oracle.sort_by_key(|r| (r.y0, r.x0));
        let marks = segment_to_marks(&img, &ComponentSegmenter::default()).unwrap();
        assert_eq!(marks.rects(), oracle);
        assert_eq!(marks.marks.iter().map(|m| m.id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(marks.marks.iter().all(|m| m.score == 1.0));
    }

    #[test]
    fn duplicate_proposals_merge() {
        let p = Proposal { rect: Rect::new(1, 1, 5, 5), score: 0.7 };
        let marks = segment_to_marks(&RgbImage::new(10, 10), &Fixed(vec![p, p])).unwrap();
        assert_eq!(marks.len(), 1);
    }

    #[test]
    fn proposals_clipped_and_ordered() {
        let ps = vec![
            Proposal { rect: Rect::new(6, 0, 20, 4), score: 0.5 },
            Proposal { rect: Rect::new(0, 0, 4, 4), score: 0.5 },
            Proposal { rect: Rect::new(0, 5, 4, 9), score: 0.5 },
        ];
        let marks = segment_to_marks(&RgbImage::new(10, 10), &Fixed(ps)).unwrap();
        assert_eq!(marks.rects(), vec![Rect::new(0, 0, 4, 4), Rect::new(6, 0, 10, 4), Rect::new(0, 5, 4, 9)]);
        marks.validate(10, 10).unwrap();
    }

    #[test]
    fn segmenter_failure_propagates() {
        assert!(matches!(segment_to_marks(&RgbImage::new(4, 4), &Broken), Err(AugmentError::SegmenterFailure(_))));
    }
}
