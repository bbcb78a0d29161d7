use serde::{Deserialize, Serialize};

/// Axis-aligned pixel rectangle over the half-open ranges `[x0, x1) × [y0, y1)`.
///
/// Coordinates are signed so that regions hanging off the frame can be
/// represented before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl BBox {
    pub const fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// A `w × h` box anchored at `(x, y)`.
    pub const fn from_origin(x: i64, y: i64, w: i64, h: i64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> i64 {
        (self.x1 - self.x0).max(0)
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0).max(0)
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new(
            self.x0.min(other.x0),
            self.y0.min(other.y0),
            self.x1.max(other.x1),
            self.y1.max(other.y1),
        )
    }

    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let b = BBox::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        );
        (!b.is_empty()).then_some(b)
    }

    /// Clamp to a `width × height` frame; `None` when nothing remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        self.intersect(&BBox::new(0, 0, width as i64, height as i64))
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && self.x1 >= other.x1 && self.y1 >= other.y1
    }
}

/// Identity and provenance of one retrievable frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub frame_id: u64,
    pub source_uri: String,
    /// Seconds into the source video; `None` for still images.
    pub timestamp: Option<f64>,
}

impl FrameRef {
    pub fn new(frame_id: u64, source_uri: impl Into<String>, timestamp: Option<f64>) -> Self {
        Self {
            frame_id,
            source_uri: source_uri.into(),
            timestamp,
        }
    }
}
