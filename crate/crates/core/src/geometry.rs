//! Points, vectors, 2×2 matrices and closed intervals.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Ambient space of a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Plane,
    Torus,
}

/// Reduce a real number into `[0, 1)`.
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Signed shortest representative of `d` modulo 1, in `[-1/2, 1/2)`.
pub fn wrap_signed(d: f64) -> f64 {
    let w = wrap_unit(d + 0.5) - 0.5;
    if w < -0.5 {
        w + 1.0
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm2(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_max(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm2();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Row-major 2×2 real matrix `[[a, b], [c, d]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 1.0)
    }

    pub const fn diag(p: f64, q: f64) -> Self {
        Self::new(p, 0.0, 0.0, q)
    }

    /// Matrix with the given vectors as columns.
    pub fn from_columns(c0: Vec2, c1: Vec2) -> Self {
        Self::new(c0.x, c1.x, c0.y, c1.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Mat2::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        [self.a - o.a, self.b - o.b, self.c - o.c, self.d - o.d]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Operator norm induced by the max-norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (self.a.abs() + self.b.abs()).max(self.c.abs() + self.d.abs())
    }
}

/// A point of the plane or of the unit torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
    pub space: Space,
}

impl Point2 {
    pub const fn plane(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            space: Space::Plane,
        }
    }

    /// Torus point; coordinates are reduced into `[0, 1)`.
    pub fn torus(x: f64, y: f64) -> Self {
        Self {
            x: wrap_unit(x),
            y: wrap_unit(y),
            space: Space::Torus,
        }
    }

    pub fn new(x: f64, y: f64, space: Space) -> Self {
        match space {
            Space::Plane => Self::plane(x, y),
            Space::Torus => Self::torus(x, y),
        }
    }

    pub fn coords(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Shortest displacement from `self` to `other`.
    pub fn displacement_to(&self, other: &Point2) -> Vec2 {
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        match self.space {
            Space::Plane => Vec2::new(dx, dy),
            Space::Torus => Vec2::new(wrap_signed(dx), wrap_signed(dy)),
        }
    }

    /// Max-metric distance, wrap-around on the torus.
    pub fn distance(&self, other: &Point2) -> f64 {
        match self.space {
            Space::Plane => (self.x - other.x).abs().max((self.y - other.y).abs()),
            Space::Torus => {
                let f = |d: f64| {
                    let d = d.abs() % 1.0;
                    d.min(1.0 - d)
                };
                f(self.x - other.x).max(f(self.y - other.y))
            }
        }
    }

    pub fn translate(&self, v: Vec2) -> Point2 {
        Point2::new(self.x + v.x, self.y + v.y, self.space)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Closed real interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Membership with `margin` of slack outside the endpoints.
    pub fn contains(&self, v: f64, margin: f64) -> bool {
        v >= self.lo - margin && v <= self.hi + margin
    }

    /// Membership at least `margin` inside both endpoints.
    pub fn contains_interior(&self, v: f64, margin: f64) -> bool {
        v > self.lo + margin && v < self.hi - margin
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.min(o.hi))
    }

    /// Length of the overlap, negative when the intervals are apart.
    pub fn overlap(&self, o: &Interval) -> f64 {
        self.hi.min(o.hi) - self.lo.max(o.lo)
    }

    /// Image under `v ↦ scale·v + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Interval {
        let p = scale * self.lo + shift;
        let q = scale * self.hi + shift;
        Interval::new(p.min(q), p.max(q))
    }

    pub fn widened(&self, factor: f64) -> Interval {
        let half = 0.5 * self.len() * factor;
        Interval::new(self.mid() - half, self.mid() + half)
    }
}
