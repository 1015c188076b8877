use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scene::actor::{ActorId, ActorState, TrafficControl};
use crate::scene::SceneError;

/// Dynamic scene at one simulation tick. The lane graph is shared separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    pub ego: ActorState,
    #[serde(default)]
    pub actors: Vec<ActorState>,
    #[serde(default)]
    pub controls: Vec<TrafficControl>,
}

impl WorldState {
    pub fn new(ego: ActorState) -> Self {
        Self {
            time: 0.0,
            ego,
            actors: Vec::new(),
            controls: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let mut seen = BTreeSet::new();
        for a in &self.actors {
            if a.id == self.ego.id {
                return Err(SceneError::Invalid(format!("actor id {} collides with ego", a.id)));
            }
            if !seen.insert(&a.id) {
                return Err(SceneError::Invalid(format!("duplicate actor id {}", a.id)));
            }
            a.validate().map_err(SceneError::Invalid)?;
        }
        self.ego.validate().map_err(SceneError::Invalid)?;
        let mut ids = BTreeSet::new();
        for c in &self.controls {
            if !ids.insert(&c.id) {
                return Err(SceneError::Invalid(format!("duplicate control id {}", c.id)));
            }
            c.validate().map_err(SceneError::Invalid)?;
        }
        Ok(())
    }

    pub fn actor(&self, id: &ActorId) -> Option<&ActorState> {
        self.actors.iter().find(|a| &a.id == id)
    }

    pub fn actor_mut(&mut self, id: &ActorId) -> Option<&mut ActorState> {
        self.actors.iter_mut().find(|a| &a.id == id)
    }

    pub fn control(&self, id: &str) -> Option<&TrafficControl> {
        self.controls.iter().find(|c| c.id == id)
    }
}
