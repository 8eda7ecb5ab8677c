//! Minimal planar geometry shared by meshing and source placement.

use crate::scalar::Scalar;

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Point2 { x, y }
    }

    /// Euclidean distance to `other`.
    pub fn dist(self, other: Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle `[xmin, xmax] x [ymin, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub xmin: T,
    pub xmax: T,
    pub ymin: T,
    pub ymax: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(xmin: T, xmax: T, ymin: T, ymax: T) -> Self {
        Rect {
            xmin,
            xmax,
            ymin,
            ymax,
        }
    }

    /// Unit square `[0,1]^2`.
    pub fn unit() -> Self {
        Rect::new(T::zero(), T::one(), T::zero(), T::one())
    }

    pub fn width(&self) -> T {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> T {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn perimeter(&self) -> T {
        T::of(2.0) * (self.width() + self.height())
    }

    /// True when `p` lies inside or on the boundary (within `tol`).
    pub fn contains(&self, p: Point2<T>, tol: T) -> bool {
        p.x >= self.xmin - tol && p.x <= self.xmax + tol && p.y >= self.ymin - tol && p.y <= self.ymax + tol
    }

    pub fn is_valid(&self) -> bool {
        self.xmin.is_finite()
            && self.xmax.is_finite()
            && self.ymin.is_finite()
            && self.ymax.is_finite()
            && self.xmax > self.xmin
            && self.ymax > self.ymin
    }
}

/// Twice the signed area of triangle `(a, b, c)`; positive for counter-clockwise order.
pub fn signed_area_x2<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> T {
    (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_measures() {
        let r = Rect::new(0.0, 10.0, 0.0, 10.0);
        assert_eq!(r.area(), 100.0);
        assert_eq!(r.perimeter(), 40.0);
        assert!(r.contains(Point2::new(5.0, 5.0), 0.0));
        assert!(!r.contains(Point2::new(-0.1, 5.0), 0.0));
    }

    #[test]
    fn ccw_triangle_has_positive_area() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        let c = Point2::new(0.0, 1.0);
        assert_eq!(signed_area_x2(a, b, c), 1.0);
        assert_eq!(signed_area_x2(a, c, b), -1.0);
    }
}
