use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{NormalizedPoint, ScreenDims};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed rectangle [{x0}, {y0}, {x1}, {y1}]")]
pub struct RectError {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Axis-aligned rectangle in normalized screen coordinates, serialized as
/// `[x0, y0, x1, y1]`. Degenerate (zero-width or zero-height) rectangles are
/// allowed; inverted or out-of-range ones are not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct NormRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl NormRect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, RectError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if unit(x0) && unit(y0) && unit(x1) && unit(y1) && x0 <= x1 && y0 <= y1 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(RectError { x0, y0, x1, y1 })
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn center(&self) -> NormalizedPoint {
        NormalizedPoint {
            x: (self.x0 + self.x1) / 2.0,
            y: (self.y0 + self.y1) / 2.0,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Inclusive on all four edges.
    pub fn contains(&self, p: NormalizedPoint) -> bool {
        self.x0 <= p.x && p.x <= self.x1 && self.y0 <= p.y && p.y <= self.y1
    }

    /// Euclidean distance from `p` to the nearest point of the rectangle.
    pub fn distance_to(&self, p: NormalizedPoint) -> f64 {
        let dx = (self.x0 - p.x).max(0.0).max(p.x - self.x1);
        let dy = (self.y0 - p.y).max(0.0).max(p.y - self.y1);
        (dx * dx + dy * dy).sqrt()
    }

    /// Half-open pixel span `(x_start, x_end, y_start, y_end)` covered on a
    /// screen of `dims`. Edges round half up.
    pub fn pixel_span(&self, dims: ScreenDims) -> (u32, u32, u32, u32) {
        fn edge(v: f64, len: u32) -> u32 {
            (v * f64::from(len) + 0.5).floor().clamp(0.0, f64::from(len)) as u32
        }
        (
            edge(self.x0, dims.width),
            edge(self.x1, dims.width),
            edge(self.y0, dims.height),
            edge(self.y1, dims.height),
        )
    }
}

impl TryFrom<[f64; 4]> for NormRect {
    type Error = RectError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        NormRect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<NormRect> for [f64; 4] {
    fn from(r: NormRect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_span_matches_scaled_edges() {
        let r = NormRect::new(0.25, 0.05, 0.75, 0.12).unwrap();
        assert_eq!(r.pixel_span(ScreenDims::new(1000, 1000).unwrap()), (250, 750, 50, 120));
    }

    #[test]
    fn rejects_inverted_and_out_of_range() {
        assert!(NormRect::new(0.5, 0.0, 0.4, 1.0).is_err());
        assert!(NormRect::new(0.0, 0.0, 1.2, 1.0).is_err());
        assert!(serde_json::from_str::<NormRect>("[0.1, 0.1, 0.05, 0.2]").is_err());
        assert!(NormRect::new(0.1, 0.1, 0.1, 0.1).unwrap().is_degenerate());
    }

    #[test]
    fn distance_is_zero_inside() {
        let r = NormRect::new(0.1, 0.1, 0.2, 0.2).unwrap();
        assert_eq!(r.distance_to(NormalizedPoint { x: 0.15, y: 0.2 }), 0.0);
        let d = r.distance_to(NormalizedPoint { x: 0.5, y: 0.5 });
        assert!((d - 0.3 * 2f64.sqrt()).abs() < 1e-12);
    }
}
