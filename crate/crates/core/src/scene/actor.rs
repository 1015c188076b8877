use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{OrientedBox, Pose2D};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActorId(pub String);

impl ActorId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActorId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Car,
    Truck,
    Van,
    Bicycle,
    Motorcycle,
    Pedestrian,
    StaticObstacle,
}

impl ActorKind {
    pub fn is_vehicle(self) -> bool {
        matches!(
            self,
            ActorKind::Car | ActorKind::Truck | ActorKind::Van | ActorKind::Bicycle | ActorKind::Motorcycle
        )
    }

    pub fn is_dynamic(self) -> bool {
        self != ActorKind::StaticObstacle
    }

    pub fn noun(self) -> &'static str {
        match self {
            ActorKind::Car => "car",
            ActorKind::Truck => "truck",
            ActorKind::Van => "van",
            ActorKind::Bicycle => "bicycle",
            ActorKind::Motorcycle => "motorcycle",
            ActorKind::Pedestrian => "pedestrian",
            ActorKind::StaticObstacle => "static obstacle",
        }
    }

    /// Default footprint (length, width) in meters.
    pub fn default_size(self) -> (f64, f64) {
        match self {
            ActorKind::Car => (4.5, 2.0),
            ActorKind::Truck => (8.0, 2.6),
            ActorKind::Van => (5.2, 2.1),
            ActorKind::Bicycle => (1.8, 0.7),
            ActorKind::Motorcycle => (2.2, 0.9),
            ActorKind::Pedestrian => (0.6, 0.6),
            ActorKind::StaticObstacle => (2.0, 2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

/// Dynamic state of one scene participant. The box is always centered on `pose`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ActorId,
    pub kind: ActorKind,
    pub pose: Pose2D,
    pub speed: f64,
    #[serde(default)]
    pub steer: f64,
    #[serde(default)]
    pub accel: f64,
    pub size: Footprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lane_id: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

impl ActorState {
    pub fn new(id: impl Into<String>, kind: ActorKind, pose: Pose2D, speed: f64) -> Self {
        let (length, width) = kind.default_size();
        Self {
            id: ActorId::new(id),
            kind,
            pose,
            speed,
            steer: 0.0,
            accel: 0.0,
            size: Footprint { length, width },
            lane_id: None,
            attributes: BTreeMap::new(),
        }
    }

    pub fn with_lane(mut self, lane: impl Into<String>) -> Self {
        self.lane_id = Some(lane.into());
        self
    }

    pub fn with_attr(mut self, key: &str, value: &str) -> Self {
        self.attributes.insert(key.to_string(), value.to_string());
        self
    }

    pub fn bbox(&self) -> OrientedBox {
        OrientedBox::new(self.pose, self.size.length, self.size.width)
    }

    pub fn velocity(&self) -> crate::Vec2D {
        self.pose.heading() * self.speed
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(format!("actor {}: speed must be finite and non-negative", self.id));
        }
        if self.kind == ActorKind::Pedestrian && self.steer != 0.0 {
            return Err(format!("actor {}: pedestrians cannot steer", self.id));
        }
        self.bbox()
            .validate()
            .map_err(|e| format!("actor {}: {e}", self.id))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    TrafficLight,
    StopSign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightState {
    Red,
    Yellow,
    Green,
    None,
}

impl LightState {
    pub fn as_str(self) -> &'static str {
        match self {
            LightState::Red => "red",
            LightState::Yellow => "yellow",
            LightState::Green => "green",
            LightState::None => "none",
        }
    }
}

/// Fixed green → yellow → red cycle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightCycle {
    pub green: f64,
    pub yellow: f64,
    pub red: f64,
    #[serde(default)]
    pub offset: f64,
}

impl LightCycle {
    pub fn state_at(&self, time: f64) -> LightState {
        let period = self.green + self.yellow + self.red;
        let phase = (time + self.offset).rem_euclid(period);
        if phase < self.green {
            LightState::Green
        } else if phase < self.green + self.yellow {
            LightState::Yellow
        } else {
            LightState::Red
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficControl {
    pub id: String,
    pub kind: ControlKind,
    pub pose: Pose2D,
    /// Lane whose traffic the control governs.
    pub lane_id: String,
    /// Arc length of the stop line along that lane.
    pub stop_line_s: f64,
    pub light_state: LightState,
    #[serde(default = "default_true")]
    pub affects_ego: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle: Option<LightCycle>,
}

fn default_true() -> bool {
    true
}

impl TrafficControl {
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            ControlKind::StopSign if self.light_state != LightState::None => {
                Err(format!("stop sign {} cannot carry a light state", self.id))
            }
            ControlKind::TrafficLight if self.light_state == LightState::None => {
                Err(format!("traffic light {} needs a light state", self.id))
            }
            _ => Ok(()),
        }
    }

    /// Whether the control currently demands the ego to stop.
    pub fn is_blocking(&self) -> bool {
        match self.kind {
            ControlKind::StopSign => true,
            ControlKind::TrafficLight => self.light_state != LightState::Green,
        }
    }
}
