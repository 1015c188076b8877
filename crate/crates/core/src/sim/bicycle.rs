//! Kinematic bicycle model, generic over the scalar type.

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::scene::geometry::Pose2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicycleParams<T> {
    /// Distance from the center of mass to the front axle.
    pub lf: T,
    /// Distance from the center of mass to the rear axle.
    pub lr: T,
    pub max_steer: T,
    /// Acceleration per unit throttle (m/s²).
    pub throttle_gain: T,
    /// Deceleration per unit brake (m/s²).
    pub brake_gain: T,
    /// Linear speed drag (1/s).
    pub drag: T,
}

impl<T: Real> Default for BicycleParams<T> {
    fn default() -> Self {
        Self {
            lf: T::lit(1.44),
            lr: T::lit(1.44),
            max_steer: T::lit(1.22),
            throttle_gain: T::lit(8.0),
            brake_gain: T::lit(10.0),
            drag: T::lit(0.1),
        }
    }
}

impl<T: Real> BicycleParams<T> {
    pub fn wheelbase(&self) -> T {
        self.lf + self.lr
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.lf, self.lr, self.max_steer, self.throttle_gain, self.brake_gain, self.drag];
        if all.iter().all(|v| *v > T::zero() && v.is_finite()) {
            Ok(())
        } else {
            Err("bicycle parameters must be positive and finite".into())
        }
    }

    /// Net longitudinal acceleration produced by a throttle/brake pair at speed `v`.
    pub fn accel_from_controls(&self, v: T, throttle: T, brake: T) -> T {
        self.throttle_gain * throttle - self.brake_gain * brake - self.drag * v
    }
}

/// Pose plus forward speed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Kinematics<T> {
    pub pose: Pose2<T>,
    pub speed: T,
}

/// One explicit Euler step under a fixed steering angle and net acceleration.
///
/// Position and heading use the speed at the start of the step; speed never
/// drops below zero.
pub fn bicycle_step_accel<T: Real>(
    state: Kinematics<T>,
    steer: T,
    accel: T,
    params: &BicycleParams<T>,
    dt: T,
) -> Kinematics<T> {
    let steer = steer.max(-params.max_steer).min(params.max_steer);
    let beta = (params.lr / params.wheelbase() * steer.tan()).atan();
    let v = state.speed;
    let heading = state.pose.yaw + beta;
    let x = state.pose.x + v * heading.cos() * dt;
    let y = state.pose.y + v * heading.sin() * dt;
    let yaw = state.pose.yaw + v / params.lr * beta.sin() * dt;
    let speed = (v + accel * dt).max(T::zero());
    Kinematics {
        pose: Pose2::new(x, y, yaw),
        speed,
    }
}

/// Bicycle step driven by throttle/brake commands.
pub fn bicycle_step<T: Real>(
    state: Kinematics<T>,
    steer: T,
    throttle: T,
    brake: T,
    params: &BicycleParams<T>,
    dt: T,
) -> Kinematics<T> {
    let accel = params.accel_from_controls(state.speed, throttle, brake);
    bicycle_step_accel(state, steer, accel, params, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frictionless() -> BicycleParams<f64> {
        BicycleParams {
            drag: 1e-12,
            ..Default::default()
        }
    }

    #[test]
    fn straight_line_advance() {
        let p: BicycleParams<f64> = BicycleParams { drag: 0.0, ..Default::default() };
        let s = Kinematics {
            pose: Pose2::new(1.0, 2.0, 0.5),
            speed: 5.0,
        };
        let n = bicycle_step(s, 0.0, 0.0, 0.0, &p, 0.05);
        let moved = (n.pose.position() - s.pose.position()).norm();
        assert!((moved - 0.25).abs() < 1e-12);
        assert_eq!(n.pose.yaw, 0.5);
        assert_eq!(n.speed, 5.0);
    }

    #[test]
    fn speed_clamped_at_zero() {
        let s = Kinematics {
            pose: Pose2::new(0.0, 0.0, 0.0),
            speed: 0.0,
        };
        let n = bicycle_step(s, 0.0, 0.0, 1.0, &BicycleParams::default(), 0.05);
        assert_eq!(n.speed, 0.0);
        assert_eq!(n.pose, s.pose);
    }

    #[test]
    fn steering_is_saturated() {
        let p = frictionless();
        let s = Kinematics {
            pose: Pose2::new(0.0, 0.0, 0.0),
            speed: 3.0,
        };
        let a = bicycle_step(s, 5.0, 0.0, 0.0, &p, 0.05);
        let b = bicycle_step(s, p.max_steer, 0.0, 0.0, &p, 0.05);
        assert_eq!(a, b);
    }

    #[test]
    fn generic_over_f32() {
        let p = BicycleParams::<f32>::default();
        let s = Kinematics {
            pose: Pose2::new(0.0f32, 0.0, 0.0),
            speed: 2.0,
        };
        let n = bicycle_step(s, 0.1, 0.5, 0.0, &p, 0.05);
        assert!(n.speed > 2.0 && n.pose.yaw > 0.0);
    }
}
