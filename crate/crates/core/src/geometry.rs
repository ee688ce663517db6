//! Axis-aligned boxes in pixel coordinates.
//!
//! Boxes are half-open with real-valued corners, so a box's area is simply
//! `(x2 - x1) * (y2 - y1)` with no `+1` pixel convention.

use crate::error::{Error, Result};
use alloc::format;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite corners and non-positive extents.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.x1.is_finite() && self.y1.is_finite() && self.x2.is_finite() && self.y2.is_finite();
        if !finite || !(self.x1 < self.x2) || !(self.y1 < self.y2) || !(self.area() > 0.0) {
            return Err(Error::validation(format!(
                "degenerate box [{}, {}, {}, {}]",
                self.x1, self.y1, self.x2, self.y2
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection-over-union for boxes already known to be valid.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Checked intersection-over-union; fails on degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(a.iou(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(c: [f64; 4]) -> BBox {
        BBox::from_array(c).unwrap()
    }

    #[test]
    fn identical_boxes() {
        assert_eq!(iou(&bx([0., 0., 10., 10.]), &bx([0., 0., 10., 10.])).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_boxes() {
        assert_eq!(iou(&bx([0., 0., 10., 10.]), &bx([20., 20., 30., 30.])).unwrap(), 0.0);
    }

    #[test]
    fn half_shifted_box_is_one_third() {
        let v = iou(&bx([0., 0., 10., 10.]), &bx([5., 0., 15., 10.])).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn touching_edges_do_not_overlap() {
        assert_eq!(bx([0., 0., 10., 10.]).iou(&bx([10., 0., 20., 10.])), 0.0);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let flat = BBox { x1: 0., y1: 0., x2: 10., y2: 0. };
        assert!(matches!(iou(&flat, &bx([0., 0., 1., 1.])), Err(Error::Validation(_))));
        assert!(BBox::new(5., 0., 5., 1.).is_err());
        assert!(BBox::new(0., 0., f64::NAN, 1.).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-500.0..500.0f64, -500.0..500.0f64, 0.5..300.0f64, 0.5..300.0f64)
            .prop_map(|(x, y, w, h)| BBox { x1: x, y1: y, x2: x + w, y2: y + h })
    }

    proptest! {
        #[test]
        fn iou_is_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(iou(&a, &b).unwrap(), iou(&b, &a).unwrap());
        }

        #[test]
        fn iou_is_bounded_and_reflexive(a in arb_box(), b in arb_box()) {
            let v = a.iou(&b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((a.iou(&a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn iou_is_translation_invariant(a in arb_box(), b in arb_box(), dx in -100.0..100.0f64, dy in -100.0..100.0f64) {
            let moved = a.translate(dx, dy).iou(&b.translate(dx, dy));
            prop_assert!((moved - a.iou(&b)).abs() < 1e-9);
        }
    }
}
