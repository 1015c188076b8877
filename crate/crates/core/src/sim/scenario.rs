//! Scenario description: map, initial scene, route, scripted events and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expert::path::PathShift;
use crate::scene::{ActorId, ActorKind, ActorState, LaneGraph, LightState, WorldState};
use crate::sim::SimError;
use crate::{Pose2D, Vec2D};

/// Scripted behavior of a background actor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActorPolicy {
    /// Never moves.
    Static,
    /// Follows its lane at a constant cruise speed.
    LaneFollow { speed: f64 },
    /// Follows its lane using IDM behind whatever is ahead in the lane.
    Idm { speed: f64 },
    /// Moves in a straight line along its heading at its current speed.
    Linear,
}

impl ActorPolicy {
    pub fn default_for(actor: &ActorState) -> Self {
        match actor.kind {
            ActorKind::StaticObstacle => ActorPolicy::Static,
            ActorKind::Pedestrian => ActorPolicy::Linear,
            _ if actor.lane_id.is_some() => ActorPolicy::LaneFollow { speed: actor.speed },
            _ => ActorPolicy::Linear,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trigger {
    /// Fires once simulation time reaches `at`.
    Time { at: f64 },
    /// Fires once the ego center comes within `radius` of `point`.
    EgoNear { point: Vec2D, radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    Spawn {
        actor: ActorState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<ActorPolicy>,
    },
    SetLight { control: String, state: LightState },
    /// Starts a pedestrian walking along `heading` at `speed`.
    StartCrossing { actor: ActorId, speed: f64, heading: f64 },
    /// Widens a static obstacle sideways, e.g. a door opening.
    OpenObstacle { actor: ActorId, width: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub trigger: Trigger,
    pub action: Action,
}

/// Seeded perturbation of background actors applied at load.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// Max absolute change of initial speed (m/s).
    #[serde(default)]
    pub speed: f64,
    /// Max absolute shift along the actor heading (m).
    #[serde(default)]
    pub position: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub lane_graph: LaneGraph,
    pub initial: WorldState,
    /// Sparse route targets visited in order after the ego start.
    pub route: Vec<Pose2D>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shifts: Vec<PathShift>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<ScenarioEvent>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub policies: BTreeMap<ActorId, ActorPolicy>,
    #[serde(default)]
    pub seed: u64,
    pub duration: f64,
    #[serde(default)]
    pub jitter: Jitter,
}

impl Scenario {
    pub fn from_json_str(s: &str) -> Result<Self, SimError> {
        let sc: Scenario = serde_json::from_str(s).map_err(|e| SimError::Config(format!("scenario parse: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Load-time checks; a scenario that passes never fails mid-run on a bad reference.
    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| SimError::Config(m);
        self.lane_graph.validate().map_err(|e| cfg(e.to_string()))?;
        self.initial.validate().map_err(|e| cfg(e.to_string()))?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(cfg("duration must be a non-negative number".into()));
        }
        if self.jitter.speed < 0.0 || self.jitter.position < 0.0 {
            return Err(cfg("jitter must be non-negative".into()));
        }
        let mut known: BTreeSet<ActorId> = self.initial.actors.iter().map(|a| a.id.clone()).collect();
        for a in self.initial.actors.iter().chain(std::iter::once(&self.initial.ego)) {
            if let Some(l) = &a.lane_id {
                if self.lane_graph.lane(l).is_none() {
                    return Err(cfg(format!("actor {} references unknown lane {l}", a.id)));
                }
            }
        }
        for c in &self.initial.controls {
            if self.lane_graph.lane(&c.lane_id).is_none() {
                return Err(cfg(format!("control {} references unknown lane {}", c.id, c.lane_id)));
            }
        }
        for (i, ev) in self.events.iter().enumerate() {
            match &ev.action {
                Action::Spawn { actor, .. } => {
                    actor.validate().map_err(cfg)?;
                    if actor.id == self.initial.ego.id || !known.insert(actor.id.clone()) {
                        return Err(cfg(format!("event {i}: spawned id {} already in use", actor.id)));
                    }
                    if let Some(l) = &actor.lane_id {
                        if self.lane_graph.lane(l).is_none() {
                            return Err(cfg(format!("event {i}: unknown lane {l}")));
                        }
                    }
                }
                Action::SetLight { control, .. } => {
                    if self.initial.control(control).is_none() {
                        return Err(cfg(format!("event {i}: unknown control {control}")));
                    }
                }
                Action::StartCrossing { actor, speed, .. } => {
                    if !known.contains(actor) {
                        return Err(cfg(format!("event {i}: unknown actor {actor}")));
                    }
                    if *speed < 0.0 {
                        return Err(cfg(format!("event {i}: negative crossing speed")));
                    }
                }
                Action::OpenObstacle { actor, width } => {
                    if !known.contains(actor) {
                        return Err(cfg(format!("event {i}: unknown actor {actor}")));
                    }
                    if *width <= 0.0 {
                        return Err(cfg(format!("event {i}: obstacle width must be positive")));
                    }
                }
            }
        }
        for id in self.policies.keys() {
            if !known.contains(id) {
                return Err(cfg(format!("policy for unknown actor {id}")));
            }
        }
        Ok(())
    }

    /// Initial world after applying the seeded jitter.
    pub fn initial_world(&self) -> WorldState {
        let mut world = self.initial.clone();
        if self.jitter.speed > 0.0 || self.jitter.position > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for a in world.actors.iter_mut().filter(|a| a.kind.is_dynamic()) {
                let dv: f64 = rng.gen_range(-1.0..=1.0) * self.jitter.speed;
                let ds: f64 = rng.gen_range(-1.0..=1.0) * self.jitter.position;
                a.speed = (a.speed + dv).max(0.0);
                let p = a.pose.position() + a.pose.heading() * ds;
                a.pose = Pose2D::new(p.x, p.y, a.pose.yaw);
            }
        }
        world
    }

    pub fn policy_for(&self, actor: &ActorState) -> ActorPolicy {
        self.policies
            .get(&actor.id)
            .copied()
            .unwrap_or_else(|| ActorPolicy::default_for(actor))
    }
}
