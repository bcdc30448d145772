//! Planar geometry shared by the simulator, planner and renderer.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(&self, other: &Point2, s: f64) -> Point2 {
        Point2::new(self.x + (other.x - self.x) * s, self.y + (other.y - self.y) * s)
    }

    pub fn bearing_to(&self, other: &Point2) -> f64 {
        (other.y - self.y).atan2(other.x - self.x)
    }
}

/// Planar pose. `theta` is kept wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Explicit Euler unicycle update: translate along the current heading, then rotate.
    pub fn integrate(&self, twist: Twist, dt: f64) -> Pose {
        Pose::new(
            self.x + twist.v * self.theta.cos() * dt,
            self.y + twist.v * self.theta.sin() * dt,
            self.theta + twist.w * dt,
        )
    }
}

/// Linear (`v`, m/s) and angular (`w`, rad/s, positive = left turn) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub w: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }

    pub fn is_stop(&self) -> bool {
        self.v == 0.0 && self.w == 0.0
    }

    pub fn clamped(&self, v_max: f64, w_max: f64) -> Twist {
        Twist::new(self.v.clamp(-v_max, v_max), self.w.clamp(-w_max, w_max))
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self {
            min: Point2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Point2::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn centered(center: Point2, width: f64, height: f64) -> Self {
        Self {
            min: Point2::new(center.x - width / 2.0, center.y - height / 2.0),
            max: Point2::new(center.x + width / 2.0, center.y + height / 2.0),
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn distance(&self, p: &Point2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: Point2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Point2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    /// True if the interiors overlap by more than `eps` on both axes.
    pub fn overlaps(&self, other: &Aabb, eps: f64) -> bool {
        self.min.x < other.max.x - eps && self.max.x > other.min.x + eps && self.min.y < other.max.y - eps && self.max.y > other.min.y + eps
    }

    pub fn center(&self) -> Point2 {
        Point2::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }
}

/// A placed planar region: a disc or an axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Circle { center: Point2, radius: f64 },
    Rect { bounds: Aabb },
}

impl Region {
    /// Euclidean distance from `p` to the region (zero inside).
    pub fn distance(&self, p: &Point2) -> f64 {
        match self {
            Region::Circle { center, radius } => (center.distance(p) - radius).max(0.0),
            Region::Rect { bounds } => bounds.distance(p),
        }
    }

    pub fn contains(&self, p: &Point2) -> bool {
        match self {
            Region::Circle { center, radius } => center.distance(p) <= *radius,
            Region::Rect { bounds } => bounds.contains(p),
        }
    }

    pub fn bounds(&self) -> Aabb {
        match self {
            Region::Circle { center, radius } => Aabb::centered(*center, 2.0 * radius, 2.0 * radius),
            Region::Rect { bounds } => *bounds,
        }
    }

    /// True if the region's interior overlaps `cell` by more than `eps`.
    pub fn overlaps_aabb(&self, cell: &Aabb, eps: f64) -> bool {
        match self {
            Region::Circle { center, radius } => cell.distance(center) < radius - eps,
            Region::Rect { bounds } => bounds.overlaps(cell, eps),
        }
    }
}

/// A vertical extrusion of a region from the floor up to `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prism {
    pub footprint: Region,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point2,
    pub b: Point2,
}

impl Segment {
    pub fn new(a: Point2, b: Point2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    /// Closed-segment intersection test (touching counts).
    pub fn intersects(&self, other: &Segment) -> bool {
        fn orient(p: &Point2, q: &Point2, r: &Point2) -> f64 {
            (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
        }
        fn on_segment(p: &Point2, q: &Point2, r: &Point2) -> bool {
            r.x >= p.x.min(q.x) && r.x <= p.x.max(q.x) && r.y >= p.y.min(q.y) && r.y <= p.y.max(q.y)
        }
        let d1 = orient(&other.a, &other.b, &self.a);
        let d2 = orient(&other.a, &other.b, &self.b);
        let d3 = orient(&self.a, &self.b, &other.a);
        let d4 = orient(&self.a, &self.b, &other.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
            return true;
        }
        (d1 == 0.0 && on_segment(&other.a, &other.b, &self.a))
            || (d2 == 0.0 && on_segment(&other.a, &other.b, &self.b))
            || (d3 == 0.0 && on_segment(&self.a, &self.b, &other.a))
            || (d4 == 0.0 && on_segment(&self.a, &self.b, &other.b))
    }

    /// Closest point on the segment to `p` and its parameter in `[0, 1]`.
    pub fn closest_point(&self, p: &Point2) -> (Point2, f64) {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return (self.a, 0.0);
        }
        let s = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        (self.a.lerp(&self.b, s), s)
    }
}

/// Total length of a polyline.
pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_keeps_pi_and_maps_minus_pi_to_pi() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn segments_cross_and_miss() {
        let s = Segment::new(Point2::new(0.0, 0.0), Point2::new(2.0, 0.0));
        assert!(s.intersects(&Segment::new(Point2::new(1.0, -1.0), Point2::new(1.0, 1.0))));
        assert!(!s.intersects(&Segment::new(Point2::new(3.0, -1.0), Point2::new(3.0, 1.0))));
        // touching endpoint
        assert!(s.intersects(&Segment::new(Point2::new(2.0, 0.0), Point2::new(2.0, 1.0))));
    }

    proptest! {
        #[test]
        fn wrap_range(a in -1e4f64..1e4) {
            let w = wrap_angle(a);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!(((a - w) / (2.0 * PI)).fract().abs() < 1e-6
                || (1.0 - ((a - w) / (2.0 * PI)).fract().abs()) < 1e-6);
        }
    }
}
