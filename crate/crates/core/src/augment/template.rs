use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::{AugmentError, MarkSet};
use crate::geom::Rect;

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.9;

/// Detections overlapping a stronger one by more than this are suppressed.
const NMS_IOU: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub image: RgbImage,
    pub threshold: f64,
}

impl Template {
    pub fn new(name: impl Into<String>, image: RgbImage) -> Self {
        Self { name: name.into(), image, threshold: DEFAULT_MATCH_THRESHOLD }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub name: String,
    pub rect: Rect,
    pub score: f64,
}

/// Loads every `<name>.png` in `dir`, sorted by name.
pub fn load_templates(dir: &Path) -> Result<Vec<Template>, AugmentError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok(Template::new(name, image::open(&p)?.to_rgb8()))
        })
        .collect()
}

/// Per-channel template statistics, computed once per template.
struct TemplateStats {
    sum: [i128; 3],
    /// `n * Σt² - (Σt)²` per channel.
    var: [i128; 3],
}

impl TemplateStats {
    fn new(t: &RgbImage) -> Self {
        let n = (t.width() * t.height()) as i128;
        let mut sum = [0i128; 3];
        let mut sq = [0i128; 3];
        for p in t.pixels() {
            for c in 0..3 {
                sum[c] += p[c] as i128;
                sq[c] += (p[c] as i128).pow(2);
            }
        }
        let var = [0, 1, 2].map(|c| n * sq[c] - sum[c] * sum[c]);
        Self { sum, var }
    }
}

/// Summed-area tables of pixel values and squares, per channel.
struct Integral {
    w: usize,
    sum: Vec<[i64; 3]>,
    sq: Vec<[i64; 3]>,
}

impl Integral {
    fn new(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let stride = w + 1;
        let mut sum = vec![[0i64; 3]; stride * (h + 1)];
        let mut sq = vec![[0i64; 3]; stride * (h + 1)];
        for y in 0..h {
            for x in 0..w {
                let p = img.get_pixel(x as u32, y as u32);
                let i = (y + 1) * stride + x + 1;
                for c in 0..3 {
                    let v = p[c] as i64;
                    sum[i][c] = v + sum[i - 1][c] + sum[i - stride][c] - sum[i - stride - 1][c];
                    sq[i][c] = v * v + sq[i - 1][c] + sq[i - stride][c] - sq[i - stride - 1][c];
                }
            }
        }
        Self { w, sum, sq }
    }

    fn window(&self, table: &[[i64; 3]], r: Rect) -> [i128; 3] {
        let s = self.w + 1;
        let (x0, y0, x1, y1) = (r.x0 as usize, r.y0 as usize, r.x1 as usize, r.y1 as usize);
        [0, 1, 2].map(|c| (table[y1 * s + x1][c] - table[y0 * s + x1][c] - table[y1 * s + x0][c] + table[y0 * s + x0][c]) as i128)
    }
}

fn ncc_with(frame: &RgbImage, integral: &Integral, t: &RgbImage, ts: &TemplateStats, x: u32, y: u32) -> f64 {
    let (tw, th) = t.dimensions();
    let n = (tw * th) as i128;
    let win = Rect::from_size(x, y, tw, th);
    let wsum = integral.window(&integral.sum, win);
    let wsq = integral.window(&integral.sq, win);
    let mut cross = [0i128; 3];
    for ty in 0..th {
        for tx in 0..tw {
            let a = t.get_pixel(tx, ty);
            let b = frame.get_pixel(x + tx, y + ty);
            for c in 0..3 {
                cross[c] += a[c] as i128 * b[c] as i128;
            }
        }
    }
    let num: i128 = (0..3).map(|c| n * cross[c] - ts.sum[c] * wsum[c]).sum();
    let a: i128 = ts.var.iter().sum();
    let b: i128 = (0..3).map(|c| n * wsq[c] - wsum[c] * wsum[c]).sum();
    if a == 0 || b == 0 {
        let equal = (0..th).all(|ty| (0..tw).all(|tx| t.get_pixel(tx, ty) == frame.get_pixel(x + tx, y + ty)));
        return if equal { 1.0 } else { 0.0 };
    }
    if num > 0 && num * num == a * b {
        return 1.0;
    }
    num as f64 / ((a as f64).sqrt() * (b as f64).sqrt())
}

/// Zero-mean normalized cross-correlation of `template` against the window of
/// `frame` whose top-left corner is (`x`, `y`), pooled over RGB channels.
///
/// Flat (zero-variance) patches score 1.0 only when pixel-identical.
pub fn ncc_at(frame: &RgbImage, template: &RgbImage, x: u32, y: u32) -> f64 {
    let integral = Integral::new(frame);
    ncc_with(frame, &integral, template, &TemplateStats::new(template), x, y)
}

fn check_fits(frame: &RgbImage, t: &Template) -> Result<(), AugmentError> {
    let (w, h) = frame.dimensions();
    let (tw, th) = t.image.dimensions();
    if tw == 0 || th == 0 || tw > w || th > h {
        return Err(AugmentError::TemplateLargerThanFrame { name: t.name.clone(), tw, th, width: w, height: h });
    }
    Ok(())
}

fn best_in(frame: &RgbImage, integral: &Integral, t: &RgbImage, ts: &TemplateStats, region: Rect) -> f64 {
    let (tw, th) = t.dimensions();
    let mut best = f64::NEG_INFINITY;
    for y in region.y0..=region.y1 - th {
        for x in region.x0..=region.x1 - tw {
            best = best.max(ncc_with(frame, integral, t, ts, x, y));
        }
    }
    best
}

/// Slides every template over the frame and keeps local maxima above the
/// template's threshold. Output is grouped by template, strongest first.
pub fn match_templates(frame: &RgbImage, templates: &[Template]) -> Result<Vec<Detection>, AugmentError> {
    for t in templates {
        check_fits(frame, t)?;
    }
    let integral = Integral::new(frame);
    let (w, h) = frame.dimensions();
    let mut out = Vec::new();
    for t in templates {
        let ts = TemplateStats::new(&t.image);
        let (tw, th) = t.image.dimensions();
        let mut hits = Vec::new();
        for y in 0..=h - th {
            for x in 0..=w - tw {
                let score = ncc_with(frame, &integral, &t.image, &ts, x, y);
                if score >= t.threshold {
                    hits.push((score, Rect::from_size(x, y, tw, th)));
                }
            }
        }
        hits.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1.y0, a.1.x0).cmp(&(b.1.y0, b.1.x0))));
        let mut kept: Vec<(f64, Rect)> = Vec::new();
        for (score, rect) in hits {
            if kept.iter().all(|k| k.1.iou(&rect) <= NMS_IOU) {
                kept.push((score, rect));
            }
        }
        out.extend(kept.into_iter().map(|(score, rect)| Detection { name: t.name.clone(), rect, score }));
    }
    Ok(out)
}

/// Drops marks that are just a watermark: the template fits inside the mark,
/// covers at least half of it, and matches somewhere inside it at or above
/// the template threshold. Remaining ids are renumbered from 1.
pub fn filter_watermarks(marks: &MarkSet, frame: &RgbImage, watermark: &Template) -> MarkSet {
    let integral = Integral::new(frame);
    let ts = TemplateStats::new(&watermark.image);
    let (tw, th) = watermark.image.dimensions();
    let t_area = tw as u64 * th as u64;
    let bounds = Rect::full(frame.width(), frame.height());
    let is_watermark = |rect: &Rect| {
        let Some(region) = rect.intersection(&bounds) else { return false };
        region.width() >= tw
            && region.height() >= th
            && 2 * t_area >= region.area()
            && best_in(frame, &integral, &watermark.image, &ts, region) >= watermark.threshold
    };
    let kept = marks.marks.iter().filter(|m| !is_watermark(&m.rect)).copied().collect();
    MarkSet { marks: kept }.redensify()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: u32, h: u32, seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]))
    }

    /// Textbook pooled zero-mean NCC in floating point.
    fn ncc_oracle(frame: &RgbImage, t: &RgbImage, x: u32, y: u32) -> f64 {
        let n = (t.width() * t.height()) as f64;
        let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
        for c in 0..3 {
            let mt: f64 = t.pixels().map(|p| p[c] as f64).sum::<f64>() / n;
            let mw: f64 = (0..t.height())
                .flat_map(|ty| (0..t.width()).map(move |tx| (tx, ty)))
                .map(|(tx, ty)| frame.get_pixel(x + tx, y + ty)[c] as f64)
                .sum::<f64>()
                / n;
            for ty in 0..t.height() {
                for tx in 0..t.width() {
                    let a = t.get_pixel(tx, ty)[c] as f64 - mt;
                    let b = frame.get_pixel(x + tx, y + ty)[c] as f64 - mw;
                    num += a * b;
                    da += a * a;
                    db += b * b;
                }
            }
        }
        num / (da.sqrt() * db.sqrt())
    }

    #[test]
    fn ncc_agrees_with_float_oracle() {
        let frame = noise(30, 30, 1);
        let t = noise(6, 5, 2);
        for (x, y) in [(0, 0), (3, 7), (24, 25), (10, 10)] {
            assert!((ncc_at(&frame, &t, x, y) - ncc_oracle(&frame, &t, x, y)).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_paste_scores_one() {
        let mut frame = noise(160, 240, 3);
        let t = noise(12, 10, 4);
        image::imageops::replace(&mut frame, &t, 100, 200);
        let dets = match_templates(&frame, &[Template::new("icon", t)]).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].rect, Rect::from_size(100, 200, 12, 10));
        assert_eq!(dets[0].score, 1.0);
    }

    #[test]
    fn two_copies_two_detections() {
        let mut frame = noise(80, 60, 5);
        let t = noise(10, 10, 6);
        image::imageops::replace(&mut frame, &t, 5, 5);
        image::imageops::replace(&mut frame, &t, 50, 40);
        let dets = match_templates(&frame, &[Template::new("icon", t)]).unwrap();
        let mut rects: Vec<Rect> = dets.iter().map(|d| d.rect).collect();
        rects.sort();
        assert_eq!(rects, vec![Rect::from_size(5, 5, 10, 10), Rect::from_size(50, 40, 10, 10)]);
    }

    #[test]
    fn anti_correlated_pattern_not_detected() {
        let t = noise(8, 8, 9);
        let inverse = RgbImage::from_fn(8, 8, |x, y| Rgb(t.get_pixel(x, y).0.map(|v| 255 - v)));
        let mut frame = RgbImage::from_pixel(32, 32, Rgb([128; 3]));
        image::imageops::replace(&mut frame, &inverse, 9, 9);
        let tpl = Template::new("check", t.clone());
        assert!(match_templates(&frame, &[tpl]).unwrap().is_empty());
        assert!(ncc_at(&frame, &t, 9, 9) < -0.999);
        // the oracle sweep agrees no position reaches the threshold
        for y in 0..=24 {
            for x in 0..=24 {
                assert!(ncc_at(&frame, &t, x, y) < 0.9);
            }
        }
    }

    #[test]
    fn oversized_template_rejected() {
        let frame = RgbImage::new(10, 10);
        let err = match_templates(&frame, &[Template::new("big", RgbImage::new(11, 2))]).unwrap_err();
        assert!(matches!(err, AugmentError::TemplateLargerThanFrame { .. }));
    }

    #[test]
    fn flat_template_only_matches_identical_flat_patch() {
        let t = RgbImage::from_pixel(4, 4, Rgb([10, 20, 30]));
        let mut frame = RgbImage::from_pixel(12, 12, Rgb([200, 200, 200]));
        image::imageops::replace(&mut frame, &t, 2, 3);
        assert_eq!(ncc_at(&frame, &t, 2, 3), 1.0);
        assert_eq!(ncc_at(&frame, &t, 8, 8), 0.0);
    }

    #[test]
    fn filter_watermarks_edge_cases() {
        let wm = noise(8, 8, 7);
        let mut frame = noise(40, 40, 8);
        image::imageops::replace(&mut frame, &wm, 2, 2);
        let tpl = Template::new("wm", wm);
        let marks = MarkSet::from_rects(vec![(Rect::new(20, 20, 30, 30), 1.0)]);
        assert_eq!(filter_watermarks(&marks, &frame, &tpl), marks);
        let all = MarkSet::from_rects(vec![(Rect::new(1, 1, 11, 11), 1.0)]);
        assert!(filter_watermarks(&all, &frame, &tpl).is_empty());
    }

    #[test]
    fn load_templates_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        noise(4, 4, 1).save(dir.path().join("b.png")).unwrap();
        noise(3, 3, 2).save(dir.path().join("a.png")).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let ts = load_templates(dir.path()).unwrap();
        assert_eq!(ts.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(ts[1].image, noise(4, 4, 1));
    }
}
