//! The composed expert and its closed-loop driver.

use std::collections::BTreeSet;

use crate::expert::config::PlannerConfig;
use crate::expert::control::{longitudinal_control, LateralPid};
use crate::expert::forecast::forecast_agents;
use crate::expert::path::{plan_path, DensePath};
use crate::expert::proposal::{score_proposal, simulate_proposal};
use crate::expert::target::target_speed;
use crate::expert::{DecisionLabel, ExpertDecision, ExpertError, Proposal};
use crate::scene::{ControlKind, LaneGraph, WorldState};
use crate::sim::{Driver, Scenario, SimError, VehicleControls, DT};

/// Speed below which the ego counts as stopped at a stop sign.
const STOPPED_SPEED: f64 = 0.1;
/// Bumper distance to a stop line within which a full stop clears the sign.
const STOP_CLEAR_DISTANCE: f64 = 5.0;
/// Distance to the route end at which the route counts as complete.
const ROUTE_END_MARGIN: f64 = 1.0;

/// Mutable state carried between expert ticks.
#[derive(Clone, Debug)]
pub struct PlannerState {
    pub pid: LateralPid,
    /// Last projected path index of the ego, to keep projection local.
    pub hint: usize,
    pub ego_s: f64,
    pub cleared_stops: BTreeSet<String>,
}

impl PlannerState {
    pub fn new(config: &PlannerConfig) -> Self {
        Self {
            pid: LateralPid::new(config.pid),
            hint: 0,
            ego_s: 0.0,
            cleared_stops: BTreeSet::new(),
        }
    }
}

fn locate_ego(world: &WorldState, path: &DensePath, state: &mut PlannerState) -> f64 {
    let p = world.ego.pose.position();
    let mut proj = path.project_near_index(p, state.hint, 8);
    if proj.distance > 3.0 {
        proj = path.project(p);
    }
    state.hint = proj.index;
    state.ego_s = proj.s;
    proj.s
}

fn update_stop_signs(world: &WorldState, path: &DensePath, ego_s: f64, state: &mut PlannerState) {
    if world.ego.speed >= STOPPED_SPEED {
        return;
    }
    let front = ego_s + world.ego.size.length / 2.0;
    for stop in path.stops.iter().filter(|s| s.kind == ControlKind::StopSign) {
        let gap = stop.s - front;
        if gap > -1.0 && gap <= STOP_CLEAR_DISTANCE {
            state.cleared_stops.insert(stop.control_id.clone());
        }
    }
}

/// One expert step: forecast, IDM target, proposal check and controls.
pub fn expert_tick(
    world: &WorldState,
    path: &DensePath,
    config: &PlannerConfig,
    state: &mut PlannerState,
) -> Result<ExpertDecision, ExpertError> {
    if path.is_empty() {
        return Err(ExpertError::Config("expert needs a non-empty path".into()));
    }
    let ego = &world.ego;
    let ego_s = locate_ego(world, path, state);
    update_stop_signs(world, path, ego_s, state);

    let forecast = forecast_agents(world, &config.bicycle, Some(path), ego_s);
    let idm = target_speed(world, path, ego_s, &config.idm, config.dt_ctrl, &state.cleared_stops);

    let ego_seq = simulate_proposal(ego, path, ego_s, idm.target, config, &state.pid);
    let (target, proposal) = if score_proposal(&ego_seq, &forecast) {
        (idm.target, Proposal::Idm)
    } else {
        (0.0, Proposal::Zero)
    };

    let (throttle, brake) = longitudinal_control(ego.speed, target, &config.longitudinal);
    let steer = state
        .pid
        .steer(&ego.pose, path, ego_s, config.lookahead(ego.speed), DT, config.bicycle.max_steer);
    let controls = VehicleControls::from_command(steer, throttle - brake);
    Ok(ExpertDecision {
        target_speed: target,
        proposal,
        leading_entity: idm.leading,
        controls,
        decision_label: DecisionLabel::from_speeds(target, ego.speed),
    })
}

/// PDM-Lite as a closed-loop driver: plans once at start, then ticks.
pub struct PdmLite {
    pub config: PlannerConfig,
    path: Option<DensePath>,
    state: PlannerState,
}

impl PdmLite {
    pub fn new(config: PlannerConfig) -> Self {
        let state = PlannerState::new(&config);
        Self {
            config,
            path: None,
            state,
        }
    }

    pub fn path(&self) -> Option<&DensePath> {
        self.path.as_ref()
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    /// Plans the dense path for a route on `lanes`.
    pub fn plan(&mut self, lanes: &LaneGraph, scenario: &Scenario, world: &WorldState) -> Result<(), ExpertError> {
        let path = plan_path(lanes, &scenario.route, &scenario.shifts, &world.controls, self.config.path_spacing)?;
        self.state = PlannerState::new(&self.config);
        self.path = Some(path);
        Ok(())
    }
}

impl Default for PdmLite {
    fn default() -> Self {
        Self::new(PlannerConfig::default())
    }
}

impl Driver for PdmLite {
    fn begin(&mut self, scenario: &Scenario, world: &WorldState) -> Result<(), SimError> {
        self.config.validate()?;
        self.plan(&scenario.lane_graph, scenario, world)?;
        Ok(())
    }

    fn decide(&mut self, world: &WorldState, _lanes: &LaneGraph) -> Result<ExpertDecision, SimError> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| SimError::Config("driver used before begin".into()))?;
        Ok(expert_tick(world, path, &self.config, &mut self.state)?)
    }

    fn route_complete(&self, _world: &WorldState) -> bool {
        self.path
            .as_ref()
            .is_some_and(|p| p.len() > 1 && self.state.ego_s >= p.length() - ROUTE_END_MARGIN)
    }

    fn config_hash(&self) -> String {
        self.config.hash()
    }
}
