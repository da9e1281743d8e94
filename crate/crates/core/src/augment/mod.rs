//! Visual prompting: overlays and groundings drawn on screenshots before they
//! are sent to the model.
//!
//! All functions here are pure: they take an image by reference and return a
//! new one.

mod render;
mod segment;
mod template;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;
use crate::io::Point;
use crate::text::{draw_text, fill_rect, text_size};

pub use render::{label_layout, render_marks, LabelLayout, MarkStyle, RenderedMarks, PALETTE};
pub use segment::{segment_to_marks, ComponentSegmenter, Proposal, Segmenter};
pub use template::{filter_watermarks, load_templates, match_templates, ncc_at, Detection, Template, DEFAULT_MATCH_THRESHOLD};

pub const BAND_WIDTH: u32 = 16;
pub const GRID_LINE_WIDTH: u32 = 2;
pub const BLUE: Rgb<u8> = Rgb([0, 0, 255]);
pub const YELLOW: Rgb<u8> = Rgb([255, 255, 0]);
pub const MAGENTA: Rgb<u8> = Rgb([255, 0, 255]);
const GRID_COLOR: Rgb<u8> = Rgb([255, 0, 0]);

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("frame width {width} too narrow for two {band} px bands")]
    FrameTooNarrow { width: u32, band: u32 },
    #[error("point ({x}, {y}) outside {width}x{height} frame")]
    CoordinateOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("segmenter failed: {0}")]
    SegmenterFailure(String),
    #[error("template `{name}` ({tw}x{th}) larger than {width}x{height} frame")]
    TemplateLargerThanFrame { name: String, tw: u32, th: u32, width: u32, height: u32 },
    #[error("invalid grid {rows}x{cols}")]
    InvalidGrid { rows: u32, cols: u32 },
    #[error("invalid mark set: {0}")]
    InvalidMarks(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One numbered bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub id: u32,
    pub rect: Rect,
    pub score: f64,
}

/// Numbered boxes over a frame, ids dense from 1 in reading order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkSet {
    pub marks: Vec<Mark>,
}

impl MarkSet {
    /// Sorts boxes top-to-bottom then left-to-right and numbers them from 1.
    pub fn from_rects(mut rects: Vec<(Rect, f64)>) -> Self {
        rects.sort_by(|a, b| (a.0.y0, a.0.x0, a.0.y1, a.0.x1).cmp(&(b.0.y0, b.0.x0, b.0.y1, b.0.x1)));
        let marks = rects.into_iter().enumerate().map(|(i, (rect, score))| Mark { id: i as u32 + 1, rect, score }).collect();
        Self { marks }
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Mark> {
        self.marks.iter().find(|m| m.id == id)
    }

    pub fn rects(&self) -> Vec<Rect> {
        self.marks.iter().map(|m| m.rect).collect()
    }

    /// Renumbers the marks 1..n keeping their order.
    pub fn redensify(mut self) -> Self {
        for (i, m) in self.marks.iter_mut().enumerate() {
            m.id = i as u32 + 1;
        }
        self
    }

    pub fn validate(&self, width: u32, height: u32) -> Result<(), AugmentError> {
        for (i, m) in self.marks.iter().enumerate() {
            if m.id != i as u32 + 1 {
                return Err(AugmentError::InvalidMarks(format!("id {} at position {}", m.id, i)));
            }
            if !m.rect.fits_in(width, height) {
                return Err(AugmentError::InvalidMarks(format!("mark {} rect {} outside frame", m.id, m.rect)));
            }
        }
        Ok(())
    }

    /// One line per mark: `id x0 y0 x1 y1 score`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MarkSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.marks {
            writeln!(f, "{} {} {}", m.id, m.rect, m.score)?;
        }
        Ok(())
    }
}

impl FromStr for MarkSet {
    type Err = AugmentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut marks = Vec::new();
        for line in s.lines().filter(|l| !l.trim().is_empty()) {
            let bad = || AugmentError::InvalidMarks(format!("bad mark line `{line}`"));
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(bad());
            }
            let id: u32 = parts[0].parse().map_err(|_| bad())?;
            let rect: Rect = parts[1..5].join(" ").parse().map_err(|_| bad())?;
            let score: f64 = parts[5].parse().map_err(|_| bad())?;
            marks.push(Mark { id, rect, score });
        }
        Ok(MarkSet { marks })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLabel {
    /// `row,col`, both starting at 1.
    #[default]
    Coordinates,
    /// Row-major cell id starting at 1.
    Index,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub label: GridLabel,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 3, cols: 5, label: GridLabel::Coordinates }
    }
}

/// Cell id (row-major from 1) to cell rect.
pub type CellMap = BTreeMap<u32, Rect>;

/// Overlays a `rows x cols` grid and returns the cell partition.
///
/// Cell boundaries sit at `floor(i * size / n)`, so cells tile the frame
/// exactly even when the size is not divisible.
pub fn draw_grid(frame: &RgbImage, spec: &GridSpec) -> Result<(RgbImage, CellMap), AugmentError> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(AugmentError::InvalidGrid { rows: spec.rows, cols: spec.cols });
    }
    let (w, h) = frame.dimensions();
    let xs: Vec<u32> = (0..=spec.cols).map(|c| (c as u64 * w as u64 / spec.cols as u64) as u32).collect();
    let ys: Vec<u32> = (0..=spec.rows).map(|r| (r as u64 * h as u64 / spec.rows as u64) as u32).collect();
    let mut cells = CellMap::new();
    for r in 0..spec.rows as usize {
        for c in 0..spec.cols as usize {
            let id = (r * spec.cols as usize + c) as u32 + 1;
            cells.insert(id, Rect::new(xs[c], ys[r], xs[c + 1], ys[r + 1]));
        }
    }
    let mut out = frame.clone();
    let half = GRID_LINE_WIDTH / 2;
    for &x in &xs[1..xs.len() - 1] {
        fill_rect(&mut out, Rect::new(x.saturating_sub(half), 0, (x + half).min(w), h), GRID_COLOR);
    }
    for &y in &ys[1..ys.len() - 1] {
        fill_rect(&mut out, Rect::new(0, y.saturating_sub(half), w, (y + half).min(h)), GRID_COLOR);
    }
    if spec.label != GridLabel::None {
        for (id, cell) in &cells {
            let text = match spec.label {
                GridLabel::Coordinates => {
                    let (r, c) = ((id - 1) / spec.cols + 1, (id - 1) % spec.cols + 1);
                    format!("{r},{c}")
                }
                _ => id.to_string(),
            };
            let (tw, th) = text_size(&text, 1);
            let x = cell.x0 + GRID_LINE_WIDTH;
            let y = cell.y0 + GRID_LINE_WIDTH;
            fill_rect(&mut out, Rect::new(x, y, x + tw + 2, y + th + 2).intersection(cell).unwrap_or(*cell), Rgb([255, 255, 255]));
            draw_text(&mut out, x as i64 + 1, y as i64 + 1, &text, 1, GRID_COLOR, Some(*cell));
        }
    }
    Ok((out, cells))
}

/// Paints a blue band on the left edge and a yellow band on the right so the
/// model can tell left from right.
pub fn draw_side_bands(frame: &RgbImage) -> Result<RgbImage, AugmentError> {
    draw_side_bands_with(frame, BAND_WIDTH)
}

pub fn draw_side_bands_with(frame: &RgbImage, band: u32) -> Result<RgbImage, AugmentError> {
    let (w, h) = frame.dimensions();
    if w <= 2 * band {
        return Err(AugmentError::FrameTooNarrow { width: w, band });
    }
    let mut out = frame.clone();
    fill_rect(&mut out, Rect::new(0, 0, band, h), BLUE);
    fill_rect(&mut out, Rect::new(w - band, 0, w, h), YELLOW);
    Ok(out)
}

/// Offsets (dx, dy) of the arrow cursor glyph, tip at (0, 0).
pub fn pointer_glyph() -> Vec<(u32, u32)> {
    let mut px = Vec::new();
    for dy in 0..14u32 {
        for dx in 0..=(dy * 2 / 3) {
            px.push((dx, dy));
        }
    }
    // stem
    for dy in 10..19u32 {
        let x0 = (dy - 10) / 2 + 3;
        for dx in x0..x0 + 3 {
            px.push((dx, dy));
        }
    }
    px.sort_unstable();
    px.dedup();
    px
}

/// Redraws the mouse cursor in magenta at `pos`, clipped to the frame.
pub fn draw_pointer(frame: &RgbImage, pos: Point) -> Result<RgbImage, AugmentError> {
    let (w, h) = frame.dimensions();
    if pos.x >= w || pos.y >= h {
        return Err(AugmentError::CoordinateOutOfBounds { x: pos.x, y: pos.y, width: w, height: h });
    }
    let mut out = frame.clone();
    for (dx, dy) in pointer_glyph() {
        let (x, y) = (pos.x + dx, pos.y + dy);
        if x < w && y < h {
            out.put_pixel(x, y, MAGENTA);
        }
    }
    Ok(out)
}
