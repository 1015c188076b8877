//! Constant-control rollouts of nearby actors over a 2 s horizon.

use crate::expert::path::DensePath;
use crate::scene::{ActorKind, ActorState, WorldState};
use crate::sim::{bicycle_step_accel, BicycleParams, Kinematics, DT};
use crate::{OrientedBox, Pose2D};

pub const FORECAST_STEPS: usize = 40;
/// Actors farther than this from the ego are ignored.
pub const FORECAST_RADIUS: f64 = 50.0;
/// Lateral band used to decide whether a box occupies the path.
pub const PATH_BAND: f64 = 2.0;
/// Lookahead along the path for leading entities.
pub const LOOKAHEAD: f64 = 100.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentForecast {
    pub actor_id: String,
    /// Boxes at t = k·0.05 s for k = 1..=40.
    pub boxes: Vec<OrientedBox>,
    pub is_leading: bool,
    pub is_rear_end: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Forecast {
    pub agents: Vec<AgentForecast>,
}

impl Forecast {
    pub fn get(&self, id: &str) -> Option<&AgentForecast> {
        self.agents.iter().find(|a| a.actor_id == id)
    }
}

/// Arc length and clearance of an actor's box when it occupies the path ahead of
/// the ego within the lookahead.
pub fn path_occupancy(actor: &ActorState, path: Option<&DensePath>, ego_s: f64) -> Option<(f64, f64)> {
    let path = path?;
    let (s, clearance) = path.box_clearance(&actor.bbox(), PATH_BAND)?;
    (s > ego_s && s - ego_s <= LOOKAHEAD).then_some((s, clearance))
}

fn rollout(actor: &ActorState, params: &BicycleParams<f64>) -> Vec<OrientedBox> {
    let bbox = actor.bbox();
    let mut state = Kinematics {
        pose: actor.pose,
        speed: actor.speed,
    };
    (1..=FORECAST_STEPS)
        .map(|k| {
            if actor.kind == ActorKind::Pedestrian {
                let p = actor.pose.position() + actor.pose.heading() * (actor.speed * k as f64 * DT);
                bbox.with_center(Pose2D::new(p.x, p.y, actor.pose.yaw))
            } else {
                state = bicycle_step_accel(state, actor.steer, actor.accel, params, DT);
                bbox.with_center(state.pose)
            }
        })
        .collect()
}

/// Forecasts every dynamic actor within 50 m of the ego under frozen controls.
///
/// `path` and `ego_s` are used to flag leading actors; pass `None` to skip.
pub fn forecast_agents(
    world: &WorldState,
    params: &BicycleParams<f64>,
    path: Option<&DensePath>,
    ego_s: f64,
) -> Forecast {
    let ego = &world.ego;
    let agents = world
        .actors
        .iter()
        .filter(|a| a.kind.is_dynamic() && a.pose.position().distance(ego.pose.position()) < FORECAST_RADIUS)
        .map(|a| {
            let local = ego.pose.to_local(a.pose.position());
            AgentForecast {
                actor_id: a.id.0.clone(),
                boxes: rollout(a, params),
                is_leading: path_occupancy(a, path, ego_s).is_some(),
                is_rear_end: local.x < 0.0 && local.y.abs() <= PATH_BAND,
            }
        })
        .collect();
    Forecast { agents }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::plan_path;
    use crate::scene::{Lane, LaneGraph};
    use crate::Vec2D;

    fn world_with(actors: Vec<ActorState>) -> WorldState {
        let mut w = WorldState::new(ActorState::new("ego", ActorKind::Car, Pose2D::new(0.0, 0.0, 0.0), 0.0));
        w.actors = actors;
        w
    }

    #[test]
    fn far_actor_is_absent() {
        let w = world_with(vec![ActorState::new("far", ActorKind::Car, Pose2D::new(60.0, 0.0, 0.0), 3.0)]);
        assert!(forecast_agents(&w, &BicycleParams::default(), None, 0.0).agents.is_empty());
    }

    #[test]
    fn stationary_actor_repeats_its_box() {
        let a = ActorState::new("car", ActorKind::Car, Pose2D::new(12.0, 3.0, 0.4), 0.0);
        let w = world_with(vec![a.clone()]);
        let f = forecast_agents(&w, &BicycleParams::default(), None, 0.0);
        assert_eq!(f.agents[0].boxes.len(), FORECAST_STEPS);
        assert!(f.agents[0].boxes.iter().all(|b| *b == a.bbox()));
    }

    #[test]
    fn constant_speed_matches_linear_oracle() {
        let yaw: f64 = 0.7;
        let a = ActorState::new("car", ActorKind::Car, Pose2D::new(5.0, -2.0, yaw), 5.0);
        let w = world_with(vec![a]);
        let f = forecast_agents(&w, &BicycleParams::default(), None, 0.0);
        for (k, b) in f.agents[0].boxes.iter().enumerate() {
            let d = 5.0 * (k + 1) as f64 / 20.0;
            assert!((b.center.x - (5.0 + d * yaw.cos())).abs() < 1e-9);
            assert!((b.center.y - (-2.0 + d * yaw.sin())).abs() < 1e-9);
        }
    }

    #[test]
    fn leading_and_rear_flags() {
        let g = LaneGraph::new(vec![Lane::straight("main", Vec2D::new(-50.0, 0.0), 0.0, 300.0, 10.0)]);
        let path = plan_path(&g, &[Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(200.0, 0.0, 0.0)], &[], &[], 1.0).unwrap();
        let w = world_with(vec![
            ActorState::new("lead", ActorKind::Car, Pose2D::new(20.0, 0.5, 0.0), 3.0),
            ActorState::new("rear", ActorKind::Car, Pose2D::new(-10.0, 0.0, 0.0), 3.0),
            ActorState::new("side", ActorKind::Car, Pose2D::new(15.0, 7.0, 0.0), 3.0),
            ActorState::new("static", ActorKind::StaticObstacle, Pose2D::new(30.0, 0.0, 0.0), 0.0),
        ]);
        let f = forecast_agents(&w, &BicycleParams::default(), Some(&path), 0.0);
        assert_eq!(f.agents.len(), 3);
        let lead = f.get("lead").unwrap();
        assert!(lead.is_leading && !lead.is_rear_end);
        let rear = f.get("rear").unwrap();
        assert!(!rear.is_leading && rear.is_rear_end);
        let side = f.get("side").unwrap();
        assert!(!side.is_leading && !side.is_rear_end);
    }
}
