//! IDM target speed: the minimum over the free road and every entity on the path.

use std::collections::BTreeSet;

use crate::expert::forecast::{path_occupancy, LOOKAHEAD};
use crate::expert::idm::{EntityClass, IdmParams, FREE_ROAD_GAP};
use crate::expert::path::DensePath;
use crate::scene::{normalize_angle, ControlKind, WorldState};

/// How far past a stop line the front bumper may be and still honor it.
const STOP_LINE_TOLERANCE: f64 = 1.0;

/// Something the ego has to keep its distance from.
#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub id: String,
    pub class: EntityClass,
    /// Bumper-to-bumper distance along the path (m).
    pub gap: f64,
    /// Closing speed, ego speed minus the entity's speed along the path.
    pub dv: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSpeed {
    pub target: f64,
    pub leading: Option<String>,
    /// Gap to the leading entity, or the free-road gap.
    pub gap: f64,
}

/// Entities intersecting the path ahead: actors within the lateral band, non-green
/// lights that affect the ego, and stop signs not yet cleared.
pub fn path_entities(world: &WorldState, path: &DensePath, ego_s: f64, cleared_stops: &BTreeSet<String>) -> Vec<Entity> {
    let ego = &world.ego;
    let ego_half = ego.size.length / 2.0;
    let mut out = Vec::new();
    for a in &world.actors {
        let Some((s, _)) = path_occupancy(a, Some(path), ego_s) else { continue };
        let tangent = path.pose_at(s).yaw;
        let rel = normalize_angle(a.pose.yaw - tangent);
        let half_along = (a.size.length / 2.0) * rel.cos().abs() + (a.size.width / 2.0) * rel.sin().abs();
        out.push(Entity {
            id: a.id.0.clone(),
            class: EntityClass::of_actor(a.kind),
            gap: s - ego_s - ego_half - half_along,
            dv: ego.speed - a.speed * rel.cos(),
        });
    }
    for stop in &path.stops {
        let Some(control) = world.control(&stop.control_id) else { continue };
        let relevant = match control.kind {
            ControlKind::TrafficLight => control.affects_ego && control.is_blocking(),
            ControlKind::StopSign => !cleared_stops.contains(&control.id),
        };
        let gap = stop.s - ego_s - ego_half;
        if relevant && gap > -STOP_LINE_TOLERANCE && gap <= LOOKAHEAD {
            out.push(Entity {
                id: control.id.clone(),
                class: EntityClass::of_control(control.kind),
                gap,
                dv: ego.speed,
            });
        }
    }
    out
}

/// Minimum IDM candidate speed over the free road and `entities`.
///
/// Each candidate is `clamp(v + acc·dt_ctrl, 0, v0)`. Ties go to an entity over
/// the free road, then to the smaller gap.
pub fn target_from_entities(v: f64, v0: f64, entities: &[Entity], params: &IdmParams, dt_ctrl: f64) -> TargetSpeed {
    let candidate = |acc: f64| (v + acc * dt_ctrl).clamp(0.0, v0);
    let mut best = TargetSpeed {
        target: candidate(params.accel(v, v0, FREE_ROAD_GAP, 0.0, EntityClass::Vehicle)),
        leading: None,
        gap: FREE_ROAD_GAP,
    };
    for e in entities {
        let c = candidate(params.accel(v, v0, e.gap, e.dv, e.class));
        let better = c < best.target || (c == best.target && (best.leading.is_none() || e.gap < best.gap));
        if better {
            best = TargetSpeed {
                target: c,
                leading: Some(e.id.clone()),
                gap: e.gap,
            };
        }
    }
    best
}

/// Target speed for the ego at arc length `ego_s` on `path`.
pub fn target_speed(
    world: &WorldState,
    path: &DensePath,
    ego_s: f64,
    params: &IdmParams,
    dt_ctrl: f64,
    cleared_stops: &BTreeSet<String>,
) -> TargetSpeed {
    let v0 = params.v0_factor * path.point_at(ego_s).speed_limit;
    let entities = path_entities(world, path, ego_s, cleared_stops);
    target_from_entities(world.ego.speed, v0, &entities, params, dt_ctrl)
}
