//! Deterministic fixed-step world simulation.

pub mod bicycle;
pub mod controls;
pub mod engine;
pub mod log;
pub mod scenario;

pub use bicycle::{bicycle_step, bicycle_step_accel, BicycleParams, Kinematics};
pub use controls::VehicleControls;
pub use engine::{run_scenario, run_scenario_with, step_world, Driver, Simulation, ANNOTATION_FPS, DT, TICK_RATE};
pub use log::{LogHeader, RolloutLog, TickRecord};
pub use scenario::{Action, ActorPolicy, Jitter, Scenario, ScenarioEvent, Trigger};

use crate::expert::ExpertError;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("rollout log line {line}: {message}")]
    LogParse { line: usize, message: String },
    #[error(transparent)]
    Expert(#[from] ExpertError),
}

#[cfg(test)]
mod tests;
