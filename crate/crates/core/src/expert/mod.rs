//! PDM-Lite: path planning, agent forecasting, IDM target speed, proposal
//! simulation, scoring and controllers.

pub mod config;
pub mod control;
pub mod forecast;
pub mod idm;
pub mod path;
pub mod pdm;
pub mod proposal;
pub mod target;

use serde::{Deserialize, Serialize};

pub use config::PlannerConfig;
pub use control::{fit_longitudinal, longitudinal_control, LateralPid, LongitudinalCoeffs, LongitudinalSample, PidGains};
pub use forecast::{forecast_agents, AgentForecast, Forecast, FORECAST_STEPS};
pub use idm::{idm_accel, EntityClass, IdmClassParams, IdmDynamics, IdmParams, FREE_ROAD_GAP};
pub use path::{plan_path, DensePath, PathPoint, PathShift, PathStop, ShiftDirection};
pub use pdm::{expert_tick, PdmLite, PlannerState};
pub use proposal::{score_proposal, simulate_proposal};
pub use target::{target_speed, TargetSpeed};

use crate::sim::VehicleControls;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionLabel {
    Accelerate,
    Cruise,
    Brake,
    Stop,
}

impl DecisionLabel {
    /// Label from the target speed relative to the current speed.
    pub fn from_speeds(target: f64, v: f64) -> Self {
        if target - v > 0.5 {
            DecisionLabel::Accelerate
        } else if v - target > 0.5 {
            DecisionLabel::Brake
        } else if target < 0.1 {
            DecisionLabel::Stop
        } else {
            DecisionLabel::Cruise
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DecisionLabel::Accelerate => "accelerate",
            DecisionLabel::Cruise => "cruise",
            DecisionLabel::Brake => "brake",
            DecisionLabel::Stop => "stop",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    Idm,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertDecision {
    pub target_speed: f64,
    pub proposal: Proposal,
    pub leading_entity: Option<String>,
    pub controls: VehicleControls,
    pub decision_label: DecisionLabel,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExpertError {
    #[error("no path to route target {target_index}: {reason}")]
    PathNotFound { target_index: usize, reason: String },
    #[error("route target {target_index} is not within snapping distance of any lane")]
    TargetOffMap { target_index: usize },
    #[error("invalid lateral shift: {0}")]
    InvalidShift(String),
    #[error("planner configuration: {0}")]
    Config(String),
}
