//! Axis-aligned box geometry used by the overlap down-weighting and the
//! detection post-processing paths.

use crate::error::{Error, Result};
use crate::real::Real;

/// Axis-aligned bounding box with `x1 <= x2`, `y1 <= y2`, all coordinates finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox<R: Real> {
    x1: R,
    y1: R,
    x2: R,
    y2: R,
}

impl<R: Real> BBox<R> {
    pub fn new(x1: R, y1: R, x2: R, y2: R) -> Result<Self> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(Error::invalid_input("box coordinates must be finite"));
        }
        if x1 > x2 || y1 > y2 {
            return Err(Error::invalid_input(
                "box must satisfy x1 <= x2 and y1 <= y2",
            ));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> R {
        self.x1
    }
    pub fn y1(&self) -> R {
        self.y1
    }
    pub fn x2(&self) -> R {
        self.x2
    }
    pub fn y2(&self) -> R {
        self.y2
    }

    pub fn width(&self) -> R {
        self.x2 - self.x1
    }

    pub fn height(&self) -> R {
        self.y2 - self.y1
    }

    pub fn area(&self) -> R {
        self.width() * self.height()
    }

    pub fn translated(&self, dx: R, dy: R) -> Result<Self> {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn to_f64(&self) -> BBox<f64> {
        BBox {
            x1: self.x1.to_f64().unwrap(),
            y1: self.y1.to_f64().unwrap(),
            x2: self.x2.to_f64().unwrap(),
            y2: self.y2.to_f64().unwrap(),
        }
    }
}

impl BBox<f64> {
    pub fn cast<R: Real>(&self) -> BBox<R> {
        BBox {
            x1: R::from_f64_lossy(self.x1),
            y1: R::from_f64_lossy(self.y1),
            x2: R::from_f64_lossy(self.x2),
            y2: R::from_f64_lossy(self.y2),
        }
    }
}

/// Intersection-over-union. Returns 0 when the union has zero area, which
/// covers the doubly-degenerate case.
pub fn iou<R: Real>(a: &BBox<R>, b: &BBox<R>) -> R {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(R::zero());
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(R::zero());
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > R::zero() {
        inter / union
    } else {
        R::zero()
    }
}
