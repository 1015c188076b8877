//! Ego rollout of a target-speed proposal and the collision-based score.

use crate::expert::config::PlannerConfig;
use crate::expert::control::{longitudinal_control, LateralPid};
use crate::expert::forecast::{Forecast, FORECAST_STEPS};
use crate::expert::path::DensePath;
use crate::scene::{obb_intersects, ActorState};
use crate::sim::{bicycle_step, Kinematics, DT};
use crate::OrientedBox;

/// Ego boxes over 2 s when tracking `path` at `target` speed.
///
/// The controllers run on a copy of `pid`, so the caller's state is untouched.
pub fn simulate_proposal(
    ego: &ActorState,
    path: &DensePath,
    ego_s: f64,
    target: f64,
    config: &PlannerConfig,
    pid: &LateralPid,
) -> Vec<OrientedBox> {
    let mut pid = pid.clone();
    let bbox = ego.bbox();
    let mut state = Kinematics {
        pose: ego.pose,
        speed: ego.speed,
    };
    let mut s = ego_s;
    let mut hint = path.index_at(ego_s);
    let params = &config.bicycle;
    (0..FORECAST_STEPS)
        .map(|_| {
            let (throttle, brake) = longitudinal_control(state.speed, target, &config.longitudinal);
            let steer = pid.steer(&state.pose, path, s, config.lookahead(state.speed), DT, params.max_steer);
            state = bicycle_step(state, steer, throttle, brake, params, DT);
            let proj = path.project_near_index(state.pose.position(), hint, 4);
            hint = proj.index;
            s = proj.s;
            bbox.with_center(state.pose)
        })
        .collect()
}

/// Accepts unless some ego box overlaps, at the same step, the box of an actor
/// that is neither leading nor rear-end.
pub fn score_proposal(ego_seq: &[OrientedBox], forecast: &Forecast) -> bool {
    !forecast
        .agents
        .iter()
        .filter(|a| !a.is_leading && !a.is_rear_end)
        .any(|a| ego_seq.iter().zip(&a.boxes).any(|(e, b)| obb_intersects(e, b)))
}
