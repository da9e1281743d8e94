//! Pixel rectangles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::io::Point;

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn from_size(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn is_valid(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.is_valid() && self.x1 <= width && self.y1 <= height
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(self.x0.max(other.x0), self.y0.max(other.y0), self.x1.min(other.x1), self.y1.min(other.y1));
        r.is_valid().then_some(r)
    }

    pub fn iou(&self, other: &Rect) -> f64 {
        let inter = self.intersection(other).map_or(0, |r| r.area());
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// `((x0 + x1) / 2, (y0 + y1) / 2)`, rounded down.
    pub fn centroid(&self) -> Point {
        Point::new((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    pub fn translate(&self, dx: u32, dy: u32) -> Rect {
        Rect::new(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.x0, self.y0, self.x1, self.y1)
    }
}

impl FromStr for Rect {
    type Err = String;
    /// Four whitespace- or comma-separated integers `x0 y0 x1 y1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u32> = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<u32>().map_err(|e| format!("bad rect component `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [x0, y0, x1, y1] => {
                let r = Rect::new(*x0, *y0, *x1, *y1);
                if r.is_valid() {
                    Ok(r)
                } else {
                    Err(format!("empty rect `{s}`"))
                }
            }
            _ => Err(format!("expected 4 integers, got `{s}`")),
        }
    }
}

/// Centroid of a rectangle, the point used for label-based mouse actions.
pub fn centroid(rect: &Rect) -> Point {
    rect.centroid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn centroid_examples() {
        assert_eq!(centroid(&Rect::new(10, 10, 30, 50)), Point::new(20, 30));
        assert_eq!(centroid(&Rect::new(5, 5, 6, 6)), Point::new(5, 5));
    }

    #[test]
    fn iou_basics() {
        let a = Rect::new(0, 0, 10, 10);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&Rect::new(10, 10, 20, 20)), 0.0);
        assert!((a.iou(&Rect::new(5, 0, 15, 10)) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn parse_rect() {
        assert_eq!("1 2 3 4".parse::<Rect>().unwrap(), Rect::new(1, 2, 3, 4));
        assert_eq!("1,2,3,4".parse::<Rect>().unwrap(), Rect::new(1, 2, 3, 4));
        assert!("3 3 3 4".parse::<Rect>().is_err());
        assert!("1 2 3".parse::<Rect>().is_err());
    }

    proptest! {
        #[test]
        fn centroid_inside(x0 in 0u32..5000, y0 in 0u32..5000, w in 1u32..5000, h in 1u32..5000) {
            let r = Rect::from_size(x0, y0, w, h);
            let c = r.centroid();
            prop_assert!(r.contains(c.x, c.y));
        }
    }
}
