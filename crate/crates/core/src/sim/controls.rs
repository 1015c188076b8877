use serde::{Deserialize, Serialize};

/// Steering plus a throttle/brake pair; at most one of the pedals is non-zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawControls")]
pub struct VehicleControls {
    steer: f64,
    throttle: f64,
    brake: f64,
}

#[derive(Deserialize)]
struct RawControls {
    steer: f64,
    throttle: f64,
    brake: f64,
}

impl TryFrom<RawControls> for VehicleControls {
    type Error = String;

    fn try_from(r: RawControls) -> Result<Self, Self::Error> {
        let pedal = |v: f64| (0.0..=1.0).contains(&v);
        if !pedal(r.throttle) || !pedal(r.brake) || !r.steer.is_finite() {
            return Err("controls out of range".into());
        }
        if r.throttle > 0.0 && r.brake > 0.0 {
            return Err("throttle and brake are mutually exclusive".into());
        }
        Ok(Self {
            steer: r.steer,
            throttle: r.throttle,
            brake: r.brake,
        })
    }
}

impl VehicleControls {
    pub fn coast(steer: f64) -> Self {
        Self {
            steer,
            throttle: 0.0,
            brake: 0.0,
        }
    }

    /// Splits a signed actuation command into throttle (`u > 0`) or brake (`u < 0`).
    pub fn from_command(steer: f64, u: f64) -> Self {
        if u > 0.0 {
            Self {
                steer,
                throttle: u.min(1.0),
                brake: 0.0,
            }
        } else {
            Self {
                steer,
                throttle: 0.0,
                brake: (-u).min(1.0),
            }
        }
    }

    pub fn steer(&self) -> f64 {
        self.steer
    }

    pub fn throttle(&self) -> f64 {
        self.throttle
    }

    pub fn brake(&self) -> f64 {
        self.brake
    }

    /// Signed actuation: throttle minus brake.
    pub fn command(&self) -> f64 {
        self.throttle - self.brake
    }

    pub fn with_max_steer(mut self, max_steer: f64) -> Self {
        self.steer = self.steer.clamp(-max_steer, max_steer);
        self
    }
}
