//! Fixed-step world integration, scripted events and the closed-loop rollout.

use std::collections::BTreeMap;

use crate::expert::idm::{idm_accel, IdmClassParams, IdmDynamics};
use crate::expert::ExpertDecision;
use crate::provenance::Provenance;
use crate::scene::{normalize_angle, ActorId, ActorState, LaneGraph, WorldState};
use crate::sim::bicycle::{bicycle_step, bicycle_step_accel, BicycleParams, Kinematics};
use crate::sim::log::{LogHeader, RolloutLog, TickRecord, ROLLOUT_FORMAT, ROLLOUT_VERSION};
use crate::sim::scenario::{Action, ActorPolicy, Scenario, Trigger};
use crate::sim::{SimError, VehicleControls};
use crate::Pose2D;

/// Simulation step (20 Hz).
pub const DT: f64 = 0.05;
pub const TICK_RATE: f64 = 20.0;
pub const ANNOTATION_FPS: f64 = 4.0;

/// Milder IDM used by background traffic.
const BACKGROUND_IDM: IdmDynamics<f64> = IdmDynamics {
    a: 3.0,
    b_low: 4.0,
    b_high: 4.0,
    b_switch_speed: 6.02,
    delta: 4.0,
};

/// Closed-loop driving policy for the ego.
pub trait Driver {
    /// Called once before the first tick.
    fn begin(&mut self, scenario: &Scenario, world: &WorldState) -> Result<(), SimError>;

    fn decide(&mut self, world: &WorldState, lanes: &LaneGraph) -> Result<ExpertDecision, SimError>;

    fn route_complete(&self, _world: &WorldState) -> bool {
        false
    }

    /// Hash identifying the driver configuration, recorded in the log.
    fn config_hash(&self) -> String;
}

/// Point `ahead` meters down the lane from arc length `s`, following first successors.
pub fn lane_point_ahead(lanes: &LaneGraph, lane_id: &str, s: f64, ahead: f64) -> Option<Pose2D> {
    let mut lane = lanes.lane(lane_id)?;
    let mut s = s + ahead;
    for _ in 0..16 {
        if s <= lane.length() {
            return Some(lane.point_at(s));
        }
        match lane.successors.first().and_then(|id| lanes.lane(id)) {
            Some(next) => {
                s -= lane.length();
                lane = next;
            }
            None => return Some(lane.point_at(lane.length())),
        }
    }
    Some(lane.point_at(s))
}

/// Pure-pursuit steering toward `target`.
fn pursuit_steer(pose: &Pose2D, target: &Pose2D, wheelbase: f64) -> f64 {
    let local = pose.to_local(target.position());
    let ld = local.norm().max(1e-3);
    let alpha = local.angle();
    (2.0 * wheelbase * alpha.sin() / ld).atan()
}

fn lane_leader_gap(actor: &ActorState, world: &WorldState, lanes: &LaneGraph) -> Option<(f64, f64)> {
    let lane = lanes.lane(actor.lane_id.as_deref()?)?;
    let own = lane.project(actor.pose.position());
    let mut best: Option<(f64, f64)> = None;
    for other in world.actors.iter().chain(std::iter::once(&world.ego)) {
        if other.id == actor.id {
            continue;
        }
        let p = lane.project(other.pose.position());
        if p.lateral.abs() > 2.0 || p.s <= own.s || p.distance > 2.5 {
            continue;
        }
        let gap = p.s - own.s - (actor.size.length + other.size.length) / 2.0;
        let along = other.speed * normalize_angle(other.pose.yaw - actor.pose.yaw).cos();
        if best.map_or(true, |(g, _)| gap < g) {
            best = Some((gap, along));
        }
    }
    best
}

fn step_background(
    actor: &ActorState,
    policy: ActorPolicy,
    world: &WorldState,
    lanes: &LaneGraph,
    params: &BicycleParams<f64>,
    dt: f64,
) -> ActorState {
    let mut next = actor.clone();
    let state = Kinematics {
        pose: actor.pose,
        speed: actor.speed,
    };
    match policy {
        ActorPolicy::Static => {
            next.speed = 0.0;
            next.accel = 0.0;
        }
        ActorPolicy::Linear => {
            let p = actor.pose.position() + actor.pose.heading() * (actor.speed * dt);
            next.pose = Pose2D::new(p.x, p.y, actor.pose.yaw);
            next.accel = 0.0;
        }
        ActorPolicy::LaneFollow { speed } | ActorPolicy::Idm { speed } => {
            let steer = actor
                .lane_id
                .as_deref()
                .and_then(|l| {
                    let s = lanes.lane(l)?.project(actor.pose.position()).s;
                    lane_point_ahead(lanes, l, s, (1.0 * actor.speed).max(4.0))
                })
                .map(|t| pursuit_steer(&actor.pose, &t, params.wheelbase()))
                .unwrap_or(0.0);
            let mut accel = 1.5 * (speed - actor.speed);
            if let ActorPolicy::Idm { .. } = policy {
                let (gap, lead_v) = lane_leader_gap(actor, world, lanes).unwrap_or((1e9, actor.speed));
                let class = IdmClassParams { s0: 4.0, headway: 0.25 };
                let idm = idm_accel(actor.speed, speed.max(0.1), gap, actor.speed - lead_v, &class, &BACKGROUND_IDM);
                accel = accel.min(idm);
            }
            let accel = accel.clamp(-params.brake_gain, params.throttle_gain);
            let k = bicycle_step_accel(state, steer, accel, params, dt);
            next.pose = k.pose;
            next.speed = k.speed;
            next.steer = steer.clamp(-params.max_steer, params.max_steer);
            next.accel = accel;
            update_lane(&mut next, lanes);
        }
    }
    next
}

/// Moves an actor onto its lane's successor once it has run past the lane end.
fn update_lane(actor: &mut ActorState, lanes: &LaneGraph) {
    let Some(lane) = actor.lane_id.as_deref().and_then(|l| lanes.lane(l)) else {
        return;
    };
    let p = lane.project(actor.pose.position());
    if p.s < lane.length() - 1e-6 {
        return;
    }
    let best = lane
        .successors
        .iter()
        .filter_map(|id| lanes.lane(id).map(|l| (id, l.project(actor.pose.position()).distance)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((id, d)) = best {
        if d <= p.distance + 1e-9 {
            actor.lane_id = Some(id.clone());
        }
    }
}

/// Advances every actor by `dt`. Events are not handled here; see [`Simulation::step`].
pub fn step_world(
    world: &WorldState,
    lanes: &LaneGraph,
    policies: &BTreeMap<ActorId, ActorPolicy>,
    ego_controls: VehicleControls,
    params: &BicycleParams<f64>,
    dt: f64,
) -> WorldState {
    let mut next = world.clone();
    next.time = world.time + dt;

    let ego_state = Kinematics {
        pose: world.ego.pose,
        speed: world.ego.speed,
    };
    let k = bicycle_step(
        ego_state,
        ego_controls.steer(),
        ego_controls.throttle(),
        ego_controls.brake(),
        params,
        dt,
    );
    next.ego.pose = k.pose;
    next.ego.speed = k.speed;
    next.ego.steer = ego_controls.steer().clamp(-params.max_steer, params.max_steer);
    next.ego.accel = params.accel_from_controls(world.ego.speed, ego_controls.throttle(), ego_controls.brake());
    if let Some((lane, _)) = lanes.nearest_aligned_lane(&next.ego.pose, 5.0) {
        next.ego.lane_id = Some(lane.id.clone());
    }

    next.actors = world
        .actors
        .iter()
        .map(|a| {
            let policy = policies.get(&a.id).copied().unwrap_or_else(|| ActorPolicy::default_for(a));
            step_background(a, policy, world, lanes, params, dt)
        })
        .collect();

    for c in &mut next.controls {
        if let Some(cycle) = c.cycle {
            c.light_state = cycle.state_at(next.time);
        }
    }
    next
}

/// Stateful rollout of a scenario: world, actor policies and pending events.
pub struct Simulation {
    lanes: LaneGraph,
    world: WorldState,
    policies: BTreeMap<ActorId, ActorPolicy>,
    events: Vec<(crate::sim::scenario::ScenarioEvent, bool)>,
    params: BicycleParams<f64>,
    tick: u64,
}

impl Simulation {
    pub fn new(scenario: &Scenario, params: BicycleParams<f64>) -> Result<Self, SimError> {
        scenario.validate()?;
        params.validate().map_err(SimError::Config)?;
        let mut world = scenario.initial_world();
        world.time = 0.0;
        for c in &mut world.controls {
            if let Some(cycle) = c.cycle {
                c.light_state = cycle.state_at(0.0);
            }
        }
        if world.ego.lane_id.is_none() {
            if let Some((lane, _)) = scenario.lane_graph.nearest_aligned_lane(&world.ego.pose, 5.0) {
                world.ego.lane_id = Some(lane.id.clone());
            }
        }
        let policies = world.actors.iter().map(|a| (a.id.clone(), scenario.policy_for(a))).collect();
        Ok(Self {
            lanes: scenario.lane_graph.clone(),
            world,
            policies,
            events: scenario.events.iter().cloned().map(|e| (e, false)).collect(),
            params,
            tick: 0,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn lanes(&self) -> &LaneGraph {
        &self.lanes
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn policies(&self) -> &BTreeMap<ActorId, ActorPolicy> {
        &self.policies
    }

    /// Integrates one tick, then fires due events in declaration order.
    pub fn step(&mut self, ego_controls: VehicleControls) {
        let mut next = step_world(&self.world, &self.lanes, &self.policies, ego_controls, &self.params, DT);
        self.tick += 1;
        // Time from the tick counter, so long rollouts do not accumulate drift.
        next.time = self.tick as f64 * DT;
        for i in 0..self.events.len() {
            if self.events[i].1 {
                continue;
            }
            let due = match &self.events[i].0.trigger {
                Trigger::Time { at } => next.time >= at - 1e-9,
                Trigger::EgoNear { point, radius } => next.ego.pose.position().distance(*point) <= *radius,
            };
            if due {
                self.events[i].1 = true;
                let action = self.events[i].0.action.clone();
                self.apply(&mut next, action);
            }
        }
        self.world = next;
    }

    fn apply(&mut self, world: &mut WorldState, action: Action) {
        match action {
            Action::Spawn { actor, policy } => {
                let policy = policy.unwrap_or_else(|| ActorPolicy::default_for(&actor));
                self.policies.insert(actor.id.clone(), policy);
                world.actors.push(actor);
            }
            Action::SetLight { control, state } => {
                if let Some(c) = world.controls.iter_mut().find(|c| c.id == control) {
                    c.light_state = state;
                    c.cycle = None;
                }
            }
            Action::StartCrossing { actor, speed, heading } => {
                if let Some(a) = world.actor_mut(&actor) {
                    a.pose = Pose2D::new(a.pose.x, a.pose.y, heading);
                    a.speed = speed;
                    a.steer = 0.0;
                    self.policies.insert(actor, ActorPolicy::Linear);
                }
            }
            Action::OpenObstacle { actor, width } => {
                if let Some(a) = world.actor_mut(&actor) {
                    a.size.width = width;
                    a.size.length = a.size.length.max(width);
                }
            }
        }
    }
}

/// Runs `driver` on the scenario at 20 Hz until the duration elapses or the route completes.
pub fn run_scenario(scenario: &Scenario, driver: &mut dyn Driver) -> Result<RolloutLog, SimError> {
    run_scenario_with(scenario, driver, BicycleParams::default())
}

pub fn run_scenario_with(
    scenario: &Scenario,
    driver: &mut dyn Driver,
    params: BicycleParams<f64>,
) -> Result<RolloutLog, SimError> {
    let mut sim = Simulation::new(scenario, params)?;
    driver.begin(scenario, sim.world())?;
    let last_tick = (scenario.duration / DT + 1e-9).floor() as u64;
    let mut records = Vec::with_capacity(last_tick as usize + 1);
    loop {
        let decision = driver.decide(sim.world(), sim.lanes())?;
        records.push(TickRecord::new(sim.tick(), sim.world().clone(), &decision));
        if sim.tick() >= last_tick || driver.route_complete(sim.world()) {
            break;
        }
        sim.step(decision.controls);
    }
    let header = LogHeader {
        format: ROLLOUT_FORMAT.to_string(),
        version: ROLLOUT_VERSION,
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        tick_rate: TICK_RATE,
        annotation_fps: ANNOTATION_FPS,
        lane_graph: scenario.lane_graph.clone(),
        provenance: Provenance::new(driver.config_hash(), scenario.seed),
    };
    Ok(RolloutLog { header, records })
}
