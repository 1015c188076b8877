//! Built-in scenarios used by tests, the CLI and the documentation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{ActorId, ActorKind, ActorState, ControlKind, Lane, LaneGraph, LightState, TrafficControl, WorldState};
use crate::sim::{Action, ActorPolicy, Jitter, Scenario, ScenarioEvent, Trigger};
use crate::{Pose2D, Vec2D};

pub const SPEED_LIMIT: f64 = 10.0;
/// Ego start along the main lane.
pub const EGO_START: f64 = 5.0;

fn ego() -> ActorState {
    ActorState::new("ego", ActorKind::Car, Pose2D::new(EGO_START, 0.0, 0.0), 0.0)
        .with_lane("main")
        .with_attr("color", "white")
}

fn straight_graph(length: f64) -> LaneGraph {
    LaneGraph::new(vec![Lane::straight("main", Vec2D::new(0.0, 0.0), 0.0, length, SPEED_LIMIT)])
}

fn scenario(name: &str, lanes: LaneGraph, world: WorldState, route_end: f64, duration: f64) -> Scenario {
    Scenario {
        name: name.to_string(),
        lane_graph: lanes,
        initial: world,
        route: vec![Pose2D::new(EGO_START, 0.0, 0.0), Pose2D::new(route_end, 0.0, 0.0)],
        shifts: Vec::new(),
        events: Vec::new(),
        policies: BTreeMap::new(),
        seed: 0,
        duration,
        jitter: Jitter::default(),
    }
}

/// Empty straight road with a 10 m/s limit.
pub fn straight_road(duration: f64) -> Scenario {
    scenario("straight_road", straight_graph(500.0), WorldState::new(ego()), 490.0, duration)
}

/// Distance from the ego start to the red-light stop line.
pub const RED_LIGHT_DISTANCE: f64 = 60.0;

/// A light 60 m ahead turns red at 2 s and back to green at 20 s.
pub fn red_light() -> Scenario {
    let mut world = WorldState::new(ego());
    let stop_s = EGO_START + RED_LIGHT_DISTANCE;
    world.controls.push(TrafficControl {
        id: "tl_1".into(),
        kind: ControlKind::TrafficLight,
        pose: Pose2D::new(stop_s, -3.0, std::f64::consts::PI),
        lane_id: "main".into(),
        stop_line_s: stop_s,
        light_state: LightState::Green,
        affects_ego: true,
        cycle: None,
    });
    let mut sc = scenario("red_light", straight_graph(300.0), world, 290.0, 30.0);
    sc.events = vec![
        ScenarioEvent {
            trigger: Trigger::Time { at: 2.0 },
            action: Action::SetLight {
                control: "tl_1".into(),
                state: LightState::Red,
            },
        },
        ScenarioEvent {
            trigger: Trigger::Time { at: 20.0 },
            action: Action::SetLight {
                control: "tl_1".into(),
                state: LightState::Green,
            },
        },
    ];
    sc
}

/// Red light that never turns green again, for the stopping criterion.
pub fn red_light_hold() -> Scenario {
    let mut sc = red_light();
    sc.name = "red_light_hold".into();
    sc.events.truncate(1);
    sc.duration = 25.0;
    sc
}

/// Parameters of one pedestrian-crossing variation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingParams {
    /// Along-road position of the crossing.
    pub crossing_x: f64,
    /// Walking speed (m/s).
    pub speed: f64,
    /// Ego distance before the crossing at which the pedestrian starts walking.
    pub trigger_distance: f64,
}

impl CrossingParams {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let speed = rng.gen_range(1.2..1.6);
        // Time for the pedestrian to reach the middle of the lane from 6 m out,
        // times a cruising ego speed, so the two meet unless the ego yields.
        let meet = 7.0 * (5.6 / speed);
        Self {
            crossing_x: rng.gen_range(50.0..70.0),
            speed,
            trigger_distance: meet + rng.gen_range(-3.0..3.0),
        }
    }
}

/// Pedestrian waiting 6 m right of the lane starts crossing as the ego approaches.
pub fn pedestrian_crossing(seed: u64) -> Scenario {
    let p = CrossingParams::from_seed(seed);
    let mut world = WorldState::new(ego());
    world.actors.push(
        ActorState::new(
            "ped_1",
            ActorKind::Pedestrian,
            Pose2D::new(p.crossing_x, -6.0, std::f64::consts::FRAC_PI_2),
            0.0,
        )
        .with_attr("type", "adult")
        .with_attr("color", "red jacket"),
    );
    let mut sc = scenario("pedestrian_crossing", straight_graph(300.0), world, 290.0, 20.0);
    sc.seed = seed;
    sc.events = vec![ScenarioEvent {
        trigger: Trigger::EgoNear {
            point: Vec2D::new(p.crossing_x - p.trigger_distance, 0.0),
            radius: 0.6,
        },
        action: Action::StartCrossing {
            actor: ActorId::new("ped_1"),
            speed: p.speed,
            heading: std::f64::consts::FRAC_PI_2,
        },
    }];
    sc
}

/// Lead car 30 m ahead holding 5 m/s.
pub fn car_following() -> Scenario {
    let mut world = WorldState::new(ego());
    world.actors.push(
        ActorState::new("lead", ActorKind::Car, Pose2D::new(EGO_START + 30.0, 0.0, 0.0), 5.0)
            .with_lane("main")
            .with_attr("color", "blue"),
    );
    let mut sc = scenario("car_following", straight_graph(600.0), world, 590.0, 40.0);
    sc.policies.insert(ActorId::new("lead"), ActorPolicy::LaneFollow { speed: 5.0 });
    sc
}

/// Two same-direction lanes plus an oncoming lane with 20 background actors.
pub fn busy_road(seed: u64) -> Scenario {
    // Lanes span x ∈ [-200, 1200] so traffic never runs off a lane end.
    let (start, length) = (-200.0, 1400.0);
    let mut main = Lane::straight("main", Vec2D::new(start, 0.0), 0.0, length, SPEED_LIMIT);
    let mut left = Lane::straight("left", Vec2D::new(start, 3.5), 0.0, length, SPEED_LIMIT);
    let oncoming = Lane::straight("oncoming", Vec2D::new(start + length, 7.0), std::f64::consts::PI, length, SPEED_LIMIT);
    main.left = Some("left".into());
    left.right = Some("main".into());
    let lanes = LaneGraph::new(vec![main, left, oncoming]);

    let mut world = WorldState::new(ego());
    let mut policies = BTreeMap::new();
    let colors = ["black", "silver", "red", "blue", "green"];
    let mut push = |world: &mut WorldState, a: ActorState, policy: ActorPolicy| {
        policies.insert(a.id.clone(), policy);
        world.actors.push(a);
    };
    // Ego-lane traffic ahead, slower than the ego's desired speed.
    push(
        &mut world,
        ActorState::new("car_lead", ActorKind::Car, Pose2D::new(45.0, 0.0, 0.0), 6.0)
            .with_lane("main")
            .with_attr("color", "black"),
        ActorPolicy::Idm { speed: 6.0 },
    );
    push(
        &mut world,
        ActorState::new("truck_lead", ActorKind::Truck, Pose2D::new(90.0, 0.0, 0.0), 6.0)
            .with_lane("main")
            .with_attr("color", "white"),
        ActorPolicy::Idm { speed: 6.0 },
    );
    // Left-lane traffic.
    for i in 0..6 {
        let x = -40.0 + i as f64 * 35.0;
        let id = format!("car_left_{i}");
        push(
            &mut world,
            ActorState::new(&id, ActorKind::Car, Pose2D::new(x, 3.5, 0.0), 8.0)
                .with_lane("left")
                .with_attr("color", colors[i % colors.len()]),
            ActorPolicy::Idm { speed: 8.0 },
        );
    }
    // Oncoming traffic.
    for i in 0..6 {
        let x = 60.0 + i as f64 * 60.0;
        let kind = if i % 3 == 2 { ActorKind::Van } else { ActorKind::Car };
        let id = format!("oncoming_{i}");
        push(
            &mut world,
            ActorState::new(&id, kind, Pose2D::new(x, 7.0, std::f64::consts::PI), 7.0)
                .with_lane("oncoming")
                .with_attr("color", colors[(i + 2) % colors.len()]),
            ActorPolicy::Idm { speed: 7.0 },
        );
    }
    // Parked cars beside the road and pedestrians on the sidewalk.
    for i in 0..3 {
        let id = format!("parked_{i}");
        push(
            &mut world,
            ActorState::new(&id, ActorKind::StaticObstacle, Pose2D::new(70.0 + i as f64 * 80.0, -4.6, 0.0), 0.0)
                .with_attr("type", "parked car"),
            ActorPolicy::Static,
        );
    }
    for i in 0..3 {
        let id = format!("walker_{i}");
        push(
            &mut world,
            ActorState::new(&id, ActorKind::Pedestrian, Pose2D::new(30.0 + i as f64 * 50.0, -7.5, 0.0), 1.3)
                .with_attr("type", "adult"),
            ActorPolicy::Linear,
        );
    }
    let route_end = start + length - 10.0;
    let mut sc = scenario("busy_road", lanes, world, route_end, 60.0);
    sc.policies = policies;
    sc.seed = seed;
    sc.jitter = Jitter {
        speed: 0.5,
        position: 2.0,
    };
    sc
}

/// Scenarios whose rollouts must stay collision-free.
pub fn standard_set() -> Vec<Scenario> {
    vec![
        straight_road(20.0),
        red_light(),
        pedestrian_crossing(1),
        car_following(),
        busy_road(7),
    ]
}

/// Looks a built-in scenario up by name.
pub fn by_name(name: &str, seed: u64) -> Option<Scenario> {
    Some(match name {
        "straight_road" => straight_road(30.0),
        "red_light" => red_light(),
        "red_light_hold" => red_light_hold(),
        "pedestrian_crossing" => pedestrian_crossing(seed),
        "car_following" => car_following(),
        "busy_road" => busy_road(seed),
        _ => return None,
    })
}

pub const NAMES: [&str; 6] = [
    "straight_road",
    "red_light",
    "red_light_hold",
    "pedestrian_crossing",
    "car_following",
    "busy_road",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_validate() {
        for name in NAMES {
            by_name(name, 3).unwrap().validate().unwrap();
        }
        assert_eq!(busy_road(0).initial.actors.len(), 20);
    }
}
