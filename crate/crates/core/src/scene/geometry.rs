//! Planar (bird's-eye view) geometry: vectors, poses and oriented boxes.
//!
//! Frame convention: x forward, y left, yaw counterclockwise from +x.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Vec2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    /// Unit vector at angle `theta`.
    pub fn from_angle(theta: T) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, theta: T) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r <= -T::PI() {
        r = r + two_pi;
    } else if r > T::PI() {
        r = r - two_pi;
    }
    r
}

/// Position plus heading. `yaw` is kept in (−π, π].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2<T> {
    pub x: T,
    pub y: T,
    pub yaw: T,
}

impl<T: Real> Pose2<T> {
    pub fn new(x: T, y: T, yaw: T) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2<T> {
        Vec2::from_angle(self.yaw)
    }

    /// Expresses a world point in this pose's local frame.
    pub fn to_local(&self, p: Vec2<T>) -> Vec2<T> {
        (p - self.position()).rotate(-self.yaw)
    }

    /// Maps a local point back into the world frame.
    pub fn to_world(&self, p: Vec2<T>) -> Vec2<T> {
        p.rotate(self.yaw) + self.position()
    }

    /// Expresses `other` relative to `self`.
    pub fn relative(&self, other: &Pose2<T>) -> Pose2<T> {
        let p = self.to_local(other.position());
        Pose2::new(p.x, p.y, other.yaw - self.yaw)
    }

    /// Applies the rigid transform `self` to a pose given in its local frame.
    pub fn compose(&self, local: &Pose2<T>) -> Pose2<T> {
        let p = self.to_world(local.position());
        Pose2::new(p.x, p.y, self.yaw + local.yaw)
    }

    /// Bearing of `p` seen from this pose, relative to its heading.
    pub fn bearing_to(&self, p: Vec2<T>) -> T {
        self.to_local(p).angle()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BoxError {
    #[error("box dimensions must be positive and finite")]
    NonPositive,
    #[error("box length must be at least its width")]
    LengthBelowWidth,
}

/// Rectangle with `length` along the heading and `width` across it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Obb<T> {
    pub center: Pose2<T>,
    pub length: T,
    pub width: T,
}

impl<T: Real> Obb<T> {
    pub fn new(center: Pose2<T>, length: T, width: T) -> Self {
        Self {
            center,
            length,
            width,
        }
    }

    pub fn validate(&self) -> Result<(), BoxError> {
        if !(self.width > T::zero() && self.length.is_finite() && self.width.is_finite()) {
            return Err(BoxError::NonPositive);
        }
        if self.length < self.width {
            return Err(BoxError::LengthBelowWidth);
        }
        Ok(())
    }

    pub fn with_center(&self, center: Pose2<T>) -> Self {
        Self { center, ..*self }
    }

    /// Corners in counterclockwise order starting front-left.
    pub fn corners(&self) -> [Vec2<T>; 4] {
        let two = T::lit(2.0);
        let hl = self.length / two;
        let hw = self.width / two;
        [
            self.center.to_world(Vec2::new(hl, hw)),
            self.center.to_world(Vec2::new(-hl, hw)),
            self.center.to_world(Vec2::new(-hl, -hw)),
            self.center.to_world(Vec2::new(hl, -hw)),
        ]
    }

    fn axes(&self) -> [Vec2<T>; 2] {
        let u = self.center.heading();
        [u, Vec2::new(-u.y, u.x)]
    }

    /// Half-extent of the box projected onto the unit axis `n`.
    fn radius_along(&self, n: Vec2<T>) -> T {
        let two = T::lit(2.0);
        let [u, v] = self.axes();
        (self.length / two) * u.dot(n).abs() + (self.width / two) * v.dot(n).abs()
    }
}

/// Separating-axis overlap test on the four edge normals.
///
/// Boxes that only touch along an edge or corner intersect.
pub fn obb_intersects<T: Real>(a: &Obb<T>, b: &Obb<T>) -> bool {
    let d = b.center.position() - a.center.position();
    let [a0, a1] = a.axes();
    let [b0, b1] = b.axes();
    [a0, a1, b0, b1]
        .into_iter()
        .all(|n| d.dot(n).abs() <= a.radius_along(n) + b.radius_along(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(x: f64, y: f64) -> Obb<f64> {
        Obb::new(Pose2::new(x, y, 0.0), 1.0, 1.0)
    }

    #[test]
    fn angle_wraps_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(-7.0 * PI) - PI).abs() < 1e-12);
    }

    #[test]
    fn identical_boxes_intersect() {
        let b = Obb::new(Pose2::new(3.0, -2.0, 0.7), 4.5, 2.0);
        assert!(obb_intersects(&b, &b));
    }

    #[test]
    fn distant_unit_squares_are_disjoint() {
        assert!(!obb_intersects(&unit(0.0, 0.0), &unit(10.0, 0.0)));
    }

    #[test]
    fn touching_edges_count() {
        assert!(obb_intersects(&unit(0.0, 0.0), &unit(1.0, 0.0)));
        assert!(!obb_intersects(&unit(0.0, 0.0), &unit(1.0 + 1e-9, 0.0)));
    }

    #[test]
    fn rotated_diamond_gap_detected() {
        // Diamond corner reaches x = 0.5 + sqrt(2)/2 ≈ 1.207.
        let square = unit(0.0, 0.0);
        let diamond = Obb::new(Pose2::new(1.75, 0.0, PI / 4.0), 1.0, 1.0);
        assert!(!obb_intersects(&square, &diamond));
        let closer = Obb::new(Pose2::new(1.2, 0.0, PI / 4.0), 1.0, 1.0);
        assert!(obb_intersects(&square, &closer));
    }

    #[test]
    fn local_world_round_trip() {
        let pose = Pose2::new(2.0, 1.0, 0.3);
        let p = Vec2::new(-4.0, 7.5);
        let back = pose.to_world(pose.to_local(p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = Obb::new(Pose2::new(0.0f32, 0.0, 0.0), 2.0, 1.0);
        let b = Obb::new(Pose2::new(1.5f32, 0.5, 0.4), 2.0, 1.0);
        assert!(obb_intersects(&a, &b));
    }

    #[test]
    fn box_validation() {
        assert!(unit(0.0, 0.0).validate().is_ok());
        assert_eq!(
            Obb::new(Pose2::new(0.0, 0.0, 0.0), 1.0, 2.0).validate(),
            Err(BoxError::LengthBelowWidth)
        );
        assert_eq!(
            Obb::new(Pose2::new(0.0, 0.0, 0.0), 1.0, 0.0).validate(),
            Err(BoxError::NonPositive)
        );
    }
}
