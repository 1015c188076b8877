//! Intelligent Driver Model with per-entity-class spacing parameters.

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::scene::{ActorKind, ControlKind};

/// Gap used to represent a free road.
pub const FREE_ROAD_GAP: f64 = 1e9;

/// Spacing parameters that depend on what the ego is following.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmClassParams<T> {
    /// Desired net distance to the leader (m).
    pub s0: T,
    /// Desired time headway (s).
    pub headway: T,
}

/// Ego-side IDM parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmDynamics<T> {
    /// Maximum acceleration (m/s²).
    pub a: T,
    /// Comfortable deceleration at or below `b_switch_speed` (m/s²).
    pub b_low: T,
    /// Comfortable deceleration above `b_switch_speed` (m/s²).
    pub b_high: T,
    pub b_switch_speed: T,
    /// Acceleration exponent.
    pub delta: T,
}

impl<T: Real> IdmDynamics<T> {
    pub fn decel(&self, v: T) -> T {
        if v <= self.b_switch_speed {
            self.b_low
        } else {
            self.b_high
        }
    }
}

impl<T: Real> Default for IdmDynamics<T> {
    fn default() -> Self {
        Self {
            a: T::lit(24.0),
            b_low: T::lit(8.7),
            b_high: T::lit(3.72),
            b_switch_speed: T::lit(6.02),
            delta: T::lit(4.0),
        }
    }
}

/// IDM acceleration for speed `v`, desired speed `v0`, net gap and closing speed `dv`.
///
/// A non-positive gap yields the emergency value `-b`.
pub fn idm_accel<T: Real>(v: T, v0: T, gap: T, dv: T, class: &IdmClassParams<T>, dynamics: &IdmDynamics<T>) -> T {
    let b = dynamics.decel(v);
    if gap <= T::zero() {
        return -b;
    }
    let two = T::lit(2.0);
    let dynamic = v * class.headway + v * dv / (two * (dynamics.a * b).sqrt());
    let s_star = class.s0 + dynamic.max(T::zero());
    let ratio = s_star / gap;
    dynamics.a * (T::one() - (v / v0).powf(dynamics.delta) - ratio * ratio)
}

/// Entity classes with separate IDM spacing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityClass {
    Vehicle,
    Bicycle,
    StopSign,
    TrafficLight,
    Walker,
    Static,
}

impl EntityClass {
    pub fn of_actor(kind: ActorKind) -> Self {
        match kind {
            ActorKind::Bicycle => EntityClass::Bicycle,
            ActorKind::Pedestrian => EntityClass::Walker,
            ActorKind::StaticObstacle => EntityClass::Static,
            _ => EntityClass::Vehicle,
        }
    }

    pub fn of_control(kind: ControlKind) -> Self {
        match kind {
            ControlKind::StopSign => EntityClass::StopSign,
            ControlKind::TrafficLight => EntityClass::TrafficLight,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub vehicle: IdmClassParams<f64>,
    pub bicycle: IdmClassParams<f64>,
    pub stop_sign: IdmClassParams<f64>,
    pub traffic_light: IdmClassParams<f64>,
    pub walker: IdmClassParams<f64>,
    #[serde(rename = "static")]
    pub static_object: IdmClassParams<f64>,
}

impl Default for ClassTable {
    /// Five parameter groups: vehicles and bicycles, stop signs, traffic lights,
    /// walkers, static objects.
    fn default() -> Self {
        let p = |s0, headway| IdmClassParams { s0, headway };
        Self {
            vehicle: p(4.0, 0.25),
            bicycle: p(4.0, 0.25),
            stop_sign: p(2.0, 0.1),
            traffic_light: p(6.0, 0.1),
            walker: p(4.0, 0.25),
            static_object: p(2.0, 0.1),
        }
    }
}

impl ClassTable {
    pub fn get(&self, class: EntityClass) -> &IdmClassParams<f64> {
        match class {
            EntityClass::Vehicle => &self.vehicle,
            EntityClass::Bicycle => &self.bicycle,
            EntityClass::StopSign => &self.stop_sign,
            EntityClass::TrafficLight => &self.traffic_light,
            EntityClass::Walker => &self.walker,
            EntityClass::Static => &self.static_object,
        }
    }

    fn all(&self) -> [&IdmClassParams<f64>; 6] {
        [
            &self.vehicle,
            &self.bicycle,
            &self.stop_sign,
            &self.traffic_light,
            &self.walker,
            &self.static_object,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired speed as a fraction of the local speed limit.
    pub v0_factor: f64,
    pub classes: ClassTable,
    pub dynamics: IdmDynamics<f64>,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0_factor: 0.72,
            classes: ClassTable::default(),
            dynamics: IdmDynamics::default(),
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), String> {
        let d = &self.dynamics;
        let scalars = [self.v0_factor, d.a, d.b_low, d.b_high, d.b_switch_speed, d.delta];
        let classes = self.classes.all().into_iter().flat_map(|c| [c.s0, c.headway]);
        if scalars.into_iter().chain(classes).all(|v| v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err("IDM parameters must be positive and finite".into())
        }
    }

    pub fn accel(&self, v: f64, v0: f64, gap: f64, dv: f64, class: EntityClass) -> f64 {
        idm_accel(v, v0, gap, dv, self.classes.get(class), &self.dynamics)
    }
}
