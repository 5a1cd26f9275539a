//! Planar rigid-body math.
//!
//! [`Pose2`] is an element of SE(2) with its heading kept in `(-π, π]` after
//! every constructor and operation. Composition follows the usual
//! convention: `a.compose(&b)` is the transform that applies `b` first and
//! then `a`.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::math::{self, normalize_angle};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_sq())
    }

    /// Largest absolute component. One simulator step can cover any
    /// displacement whose Chebyshev norm is at most the per-axis step size.
    #[inline]
    pub fn norm_inf(self) -> f64 {
        self.x.abs().max(self.y.abs())
    }

    #[inline]
    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Rotate about the origin by `theta`.
    #[inline]
    pub fn rotated(self, theta: f64) -> Point2 {
        let (s, c) = (math::sin(theta), math::cos(theta));
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    #[inline]
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    #[inline]
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    #[inline]
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    #[inline]
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Planar rigid pose: position in workspace units plus heading in radians.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn from_parts(position: Point2, theta: f64) -> Self {
        Self::new(position.x, position.y, theta)
    }

    #[inline]
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = (math::sin(self.theta), math::cos(self.theta));
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = (math::sin(self.theta), math::cos(self.theta));
        Pose2::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// The relative pose `self⁻¹ ∘ other`, i.e. `other` seen from `self`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    #[inline]
    pub fn transform_point(&self, p: Point2) -> Point2 {
        let (s, c) = (math::sin(self.theta), math::cos(self.theta));
        Point2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn apply(&self, points: &PointSet) -> PointSet {
        PointSet(points.iter().map(|&p| self.transform_point(p)).collect())
    }

    /// Signed heading difference `other - self`, wrapped.
    pub fn heading_to(&self, other: &Pose2) -> f64 {
        normalize_angle(other.theta - self.theta)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct PointSet(pub Vec<Point2>);

impl PointSet {
    pub fn new(points: Vec<Point2>) -> Self {
        Self(points)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Point2> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Point2] {
        &self.0
    }

    /// Arithmetic mean; the origin for an empty set.
    pub fn centroid(&self) -> Point2 {
        if self.0.is_empty() {
            return Point2::ORIGIN;
        }
        let n = self.0.len() as f64;
        let sum = self.0.iter().fold(Point2::ORIGIN, |acc, &p| acc + p);
        sum * (1.0 / n)
    }

    /// Doubled principal-axis angle as a unit vector `(cos 2φ, sin 2φ)`.
    ///
    /// The principal axis is only defined modulo π, which the doubled angle
    /// encodes without a discontinuity. Returns `(1, 0)` for isotropic sets.
    pub fn principal_axis_doubled(&self) -> (f64, f64) {
        let c = self.centroid();
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for &p in &self.0 {
            let d = p - c;
            sxx += d.x * d.x;
            syy += d.y * d.y;
            sxy += d.x * d.y;
        }
        let (u, v) = (sxx - syy, 2.0 * sxy);
        let r = math::sqrt(u * u + v * v);
        if r < 1e-15 {
            (1.0, 0.0)
        } else {
            (u / r, v / r)
        }
    }

    /// Index and squared distance of the point nearest to `q`.
    pub fn nearest(&self, q: Point2) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p) in self.0.iter().enumerate() {
            let d = (p - q).norm_sq();
            match best {
                Some((_, bd)) if bd <= d => {}
                _ => best = Some((i, d)),
            }
        }
        best
    }
}

impl From<Vec<Point2>> for PointSet {
    fn from(v: Vec<Point2>) -> Self {
        Self(v)
    }
}

/// Componentwise affine interpolation, exact at both endpoints.
pub fn lerp_position(p0: Point2, p1: Point2, t: f64) -> Point2 {
    Point2::new((1.0 - t) * p0.x + t * p1.x, (1.0 - t) * p0.y + t * p1.y)
}

/// Shortest-arc interpolation between two headings.
///
/// This is quaternion Slerp restricted to rotations about a single axis.
/// When the two headings are exactly antipodal the arc is taken
/// counter-clockwise from `a0`.
pub fn slerp_angle(a0: f64, a1: f64, t: f64) -> f64 {
    // normalize_angle maps an antipodal difference to +π, i.e. CCW.
    let arc = normalize_angle(a1 - a0);
    normalize_angle(a0 + t * arc)
}

/// Interpolate a full pose: linear in position, shortest arc in heading.
pub fn interpolate_pose(a: &Pose2, b: &Pose2, t: f64) -> Pose2 {
    Pose2::from_parts(
        lerp_position(a.position(), b.position(), t),
        slerp_angle(a.theta, b.theta, t),
    )
}
