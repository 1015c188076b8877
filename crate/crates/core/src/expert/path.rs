//! Dense route planning: A* over the lane graph between sparse targets, chord
//! resampling at a fixed spacing, lateral shifts and per-point metadata.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::expert::ExpertError;
use crate::scene::{ControlKind, Lane, LaneGraph, TrafficControl};
use crate::{OrientedBox, Pose2D, Vec2D};

/// Maximum distance between a route target and the lane it snaps to.
pub const SNAP_RADIUS: f64 = 5.0;
/// Resolution of the intermediate polyline before resampling.
const FINE_STEP: f64 = 0.25;
/// Length of the linear blend at each end of a lateral shift.
const SHIFT_RAMP: f64 = 10.0;
const GRID_CELL: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftDirection {
    Left,
    Right,
}

/// Interval of the base route that moves over to a neighboring lane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathShift {
    pub s_start: f64,
    pub s_end: f64,
    pub direction: ShiftDirection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub pose: Pose2D,
    pub s: f64,
    pub speed_limit: f64,
    pub dist_to_next_light: f64,
    pub dist_to_next_stop: f64,
    pub lane_id: String,
}

/// Traffic control located on the path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStop {
    pub control_id: String,
    pub kind: ControlKind,
    pub s: f64,
}

/// Closest point of the path to a query position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathProjection {
    pub s: f64,
    /// Signed offset, positive left of the path.
    pub lateral: f64,
    pub distance: f64,
    /// Index of the segment start point.
    pub index: usize,
}

#[derive(Clone, Debug)]
pub struct DensePath {
    pub points: Vec<PathPoint>,
    pub spacing: f64,
    pub stops: Vec<PathStop>,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl DensePath {
    pub fn new(points: Vec<PathPoint>, spacing: f64, stops: Vec<PathStop>) -> Self {
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            grid.entry(cell_of(p.pose.position())).or_default().push(i);
        }
        Self {
            points,
            spacing,
            stops,
            grid,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.s)
    }

    /// Index of the point at or just before arc length `s`.
    pub fn index_at(&self, s: f64) -> usize {
        if self.points.len() < 2 {
            return 0;
        }
        let i = (s / self.spacing).floor();
        (i.max(0.0) as usize).min(self.points.len() - 1)
    }

    /// Interpolated pose at arc length `s`, clamped to the path.
    pub fn pose_at(&self, s: f64) -> Pose2D {
        let n = self.points.len();
        if n == 1 {
            return self.points[0].pose;
        }
        let s = s.clamp(0.0, self.length());
        let i = self.index_at(s).min(n - 2);
        let a = &self.points[i];
        let b = &self.points[i + 1];
        let t = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        let p = a.pose.position().lerp(b.pose.position(), t);
        Pose2D::new(p.x, p.y, (b.pose.position() - a.pose.position()).angle())
    }

    pub fn point_at(&self, s: f64) -> &PathPoint {
        &self.points[self.index_at(s.max(0.0))]
    }

    fn project_segment(&self, i: usize, p: Vec2D) -> PathProjection {
        let a = self.points[i].pose.position();
        if i + 1 >= self.points.len() {
            let d = p - a;
            let lateral = self.points[i].pose.heading().cross(d);
            return PathProjection {
                s: self.points[i].s,
                lateral,
                distance: d.norm(),
                index: i,
            };
        }
        let b = self.points[i + 1].pose.position();
        let d = b - a;
        let len2 = d.dot(d);
        let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = a + d * t;
        let len = len2.sqrt();
        PathProjection {
            s: self.points[i].s + t * len,
            lateral: if len > 0.0 { d.cross(p - a) / len } else { 0.0 },
            distance: p.distance(q),
            index: i,
        }
    }

    fn best_of(&self, p: Vec2D, candidates: impl Iterator<Item = usize>) -> Option<PathProjection> {
        let last_seg = self.points.len().saturating_sub(2);
        candidates
            .map(|i| self.project_segment(i.min(last_seg), p))
            .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.s.total_cmp(&b.s)))
    }

    /// Global projection onto the path.
    pub fn project(&self, p: Vec2D) -> PathProjection {
        self.best_of(p, 0..self.points.len()).expect("path is non-empty")
    }

    /// Projection searching only segments within `window` points of `hint`.
    pub fn project_near_index(&self, p: Vec2D, hint: usize, window: usize) -> PathProjection {
        let lo = hint.saturating_sub(window);
        let hi = (hint + window + 1).min(self.points.len());
        self.best_of(p, lo..hi).expect("path is non-empty")
    }

    /// Projection restricted to path points within roughly `radius` of `p`.
    pub fn project_within(&self, p: Vec2D, radius: f64) -> Option<PathProjection> {
        let (cx, cy) = cell_of(p);
        let r = (radius / GRID_CELL).ceil() as i64 + 1;
        let mut candidates = Vec::new();
        for dx in -r..=r {
            for dy in -r..=r {
                if let Some(ids) = self.grid.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        candidates.push(i);
                        if i > 0 {
                            candidates.push(i - 1);
                        }
                    }
                }
            }
        }
        self.best_of(p, candidates.into_iter()).filter(|pr| pr.distance <= radius)
    }

    /// Relation of a box to the path: `(s, lateral clearance)` where clearance is
    /// the distance from the path to the nearest box side (negative when the box
    /// straddles the path). `None` if the box is farther than `margin` from the path.
    pub fn box_clearance(&self, bbox: &OrientedBox, margin: f64) -> Option<(f64, f64)> {
        let half_diag = bbox.length.hypot(bbox.width) / 2.0;
        let proj = self.project_within(bbox.center.position(), margin + half_diag + self.spacing)?;
        let tangent = self.pose_at(proj.s).yaw;
        // Half extent of the box across the path direction.
        let rel = bbox.center.yaw - tangent;
        let half_across = (bbox.length / 2.0) * rel.sin().abs() + (bbox.width / 2.0) * rel.cos().abs();
        let clearance = proj.lateral.abs() - half_across;
        (clearance <= margin).then_some((proj.s, clearance))
    }
}

fn cell_of(p: Vec2D) -> (i64, i64) {
    ((p.x / GRID_CELL).floor() as i64, (p.y / GRID_CELL).floor() as i64)
}

/// Stretch of one lane traversed by the route.
#[derive(Clone, Debug, PartialEq)]
struct Piece {
    lane: String,
    from: f64,
    to: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Scored {
    f: f64,
    seq: u64,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug)]
enum Node {
    Lane(String),
    Goal,
}

/// A* over lane successors from `(from_lane, from_s)` to `(to_lane, to_s)`.
///
/// Cost is arc length; the heuristic is the straight-line distance from a lane
/// start to the goal point, which never overestimates.
fn astar_lanes(
    lanes: &LaneGraph,
    from_lane: &Lane,
    from_s: f64,
    to_lane: &Lane,
    to_s: f64,
) -> Option<Vec<Piece>> {
    let goal = to_lane.point_at(to_s).position();
    let mut heap = BinaryHeap::new();
    let mut nodes: Vec<(Node, f64, Option<usize>)> = Vec::new();
    let mut best_g: BTreeMap<String, f64> = BTreeMap::new();
    let mut seq = 0u64;
    let start_g = from_lane.length() - from_s;
    for succ in &from_lane.successors {
        let Some(l) = lanes.lane(succ) else { continue };
        let h = l.point_at(0.0).position().distance(goal);
        nodes.push((Node::Lane(succ.clone()), start_g, None));
        heap.push((Scored { f: start_g + h, seq }, nodes.len() - 1));
        seq += 1;
    }
    while let Some((_, idx)) = heap.pop() {
        let (node, g, _) = nodes[idx].clone();
        let id = match node {
            Node::Goal => {
                // Reconstruct through parents (skipping the goal marker).
                let mut chain = Vec::new();
                let mut cur = nodes[idx].2;
                while let Some(i) = cur {
                    if let Node::Lane(id) = &nodes[i].0 {
                        chain.push(id.clone());
                    }
                    cur = nodes[i].2;
                }
                chain.reverse();
                let mut pieces = vec![Piece {
                    lane: from_lane.id.clone(),
                    from: from_s,
                    to: from_lane.length(),
                }];
                let last = chain.len() - 1;
                for (k, id) in chain.into_iter().enumerate() {
                    let len = lanes.lane(&id).map_or(0.0, Lane::length);
                    pieces.push(Piece {
                        lane: id,
                        from: 0.0,
                        to: if k == last { to_s } else { len },
                    });
                }
                return Some(pieces);
            }
            Node::Lane(id) => id,
        };
        if best_g.get(&id).is_some_and(|&b| b <= g) {
            continue;
        }
        best_g.insert(id.clone(), g);
        let lane = lanes.lane(&id)?;
        if id == to_lane.id {
            nodes.push((Node::Goal, g + to_s, Some(idx)));
            heap.push((Scored { f: g + to_s, seq }, nodes.len() - 1));
            seq += 1;
        }
        let g_next = g + lane.length();
        for succ in &lane.successors {
            let Some(l) = lanes.lane(succ) else { continue };
            if best_g.get(succ).is_some_and(|&b| b <= g_next) {
                continue;
            }
            let h = l.point_at(0.0).position().distance(goal);
            nodes.push((Node::Lane(succ.clone()), g_next, Some(idx)));
            heap.push((Scored { f: g_next + h, seq }, nodes.len() - 1));
            seq += 1;
        }
    }
    None
}

#[derive(Clone, Debug)]
struct FineSample {
    pos: Vec2D,
    base_s: f64,
    lane: String,
}

fn shift_weight(base_s: f64, shift: &PathShift) -> f64 {
    let len = shift.s_end - shift.s_start;
    if len <= 0.0 || base_s < shift.s_start || base_s > shift.s_end {
        return 0.0;
    }
    let ramp = SHIFT_RAMP.min(len / 3.0);
    let up = (base_s - shift.s_start) / ramp;
    let down = (shift.s_end - base_s) / ramp;
    up.min(down).min(1.0)
}

/// Walks the fine polyline and emits points exactly `spacing` apart (Euclidean).
fn chord_resample(fine: &[FineSample], spacing: f64) -> Vec<FineSample> {
    let mut out = vec![fine[0].clone()];
    let mut seg = 0usize;
    let mut t0 = 0.0;
    'outer: while seg + 1 < fine.len() {
        let c = out.last().expect("non-empty").pos;
        for k in seg..fine.len() - 1 {
            let a = fine[k].pos;
            let b = fine[k + 1].pos;
            if b.distance(c) < spacing - 1e-6 {
                continue;
            }
            let d = b - a;
            let f = a - c;
            let qa = d.dot(d);
            let qb = 2.0 * f.dot(d);
            let qc = f.dot(f) - spacing * spacing;
            let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
            let lo = if k == seg { t0 } else { 0.0 };
            let roots = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
            let Some(t) = roots.into_iter().filter(|t| *t >= lo - 1e-12 && *t <= 1.0 + 1e-12).reduce(f64::min) else {
                continue;
            };
            let t = t.clamp(0.0, 1.0);
            out.push(FineSample {
                pos: a.lerp(b, t),
                base_s: fine[k].base_s + (fine[k + 1].base_s - fine[k].base_s) * t,
                lane: if t < 1.0 { fine[k].lane.clone() } else { fine[k + 1].lane.clone() },
            });
            seg = k;
            t0 = t;
            continue 'outer;
        }
        break;
    }
    out
}

/// Plans a dense path visiting `targets` in order.
///
/// Each target snaps to the nearest heading-aligned lane within 5 m. Consecutive
/// targets on the same lane connect directly; otherwise A* searches lane
/// successors. The result is resampled at `spacing` and annotated with speed
/// limits and the distance to the next traffic light and stop sign.
pub fn plan_path(
    lanes: &LaneGraph,
    targets: &[Pose2D],
    shifts: &[PathShift],
    controls: &[TrafficControl],
    spacing: f64,
) -> Result<DensePath, ExpertError> {
    if targets.is_empty() {
        return Err(ExpertError::Config("route needs at least one target".into()));
    }
    if !(spacing > 0.0) {
        return Err(ExpertError::Config("path spacing must be positive".into()));
    }
    let mut snapped = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let (lane, proj) = lanes
            .nearest_aligned_lane(t, SNAP_RADIUS)
            .ok_or(ExpertError::TargetOffMap { target_index: i })?;
        snapped.push((lane, proj.s));
    }

    let mut pieces: Vec<Piece> = Vec::new();
    if snapped.len() == 1 {
        let (lane, s) = snapped[0];
        pieces.push(Piece {
            lane: lane.id.clone(),
            from: s,
            to: s,
        });
    }
    for (i, w) in snapped.windows(2).enumerate() {
        let ((la, sa), (lb, sb)) = (w[0], w[1]);
        if la.id == lb.id && sb >= sa - 1e-9 {
            pieces.push(Piece {
                lane: la.id.clone(),
                from: sa,
                to: sb.max(sa),
            });
        } else {
            let found = astar_lanes(lanes, la, sa, lb, sb).ok_or(ExpertError::PathNotFound {
                target_index: i + 1,
                reason: format!("no lane sequence from {} to {}", la.id, lb.id),
            })?;
            pieces.extend(found);
        }
    }

    // Fine polyline with base arc length and lane membership.
    let mut fine: Vec<FineSample> = Vec::new();
    let mut piece_offsets = Vec::with_capacity(pieces.len());
    let mut base = 0.0;
    for piece in &pieces {
        let lane = lanes.lane(&piece.lane).expect("snapped lanes exist");
        piece_offsets.push(base);
        let span = piece.to - piece.from;
        let n = (span / FINE_STEP).ceil().max(0.0) as usize;
        for k in 0..=n {
            let s = if k == n { piece.to } else { piece.from + k as f64 * FINE_STEP };
            let pos = lane.point_at(s).position();
            if let Some(prev) = fine.last() {
                let d = prev.pos.distance(pos);
                if d < 1e-9 {
                    continue;
                }
                base += d;
            }
            fine.push(FineSample {
                pos,
                base_s: base,
                lane: piece.lane.clone(),
            });
        }
    }

    for shift in shifts {
        if shift.s_end <= shift.s_start {
            return Err(ExpertError::InvalidShift(format!(
                "shift interval [{}, {}] is empty",
                shift.s_start, shift.s_end
            )));
        }
        for sample in fine.iter_mut() {
            let w = shift_weight(sample.base_s, shift);
            if w <= 0.0 {
                continue;
            }
            let lane = lanes.lane(&sample.lane).expect("lane exists");
            let neighbor_id = match shift.direction {
                ShiftDirection::Left => lane.left.as_ref(),
                ShiftDirection::Right => lane.right.as_ref(),
            }
            .ok_or_else(|| {
                ExpertError::InvalidShift(format!("lane {} has no {:?} neighbor", lane.id, shift.direction))
            })?;
            let neighbor = lanes.lane(neighbor_id).expect("validated neighbor");
            let q = neighbor.point_at(neighbor.project(sample.pos).s).position();
            sample.pos = sample.pos.lerp(q, w);
        }
    }

    let dense = if fine.len() == 1 {
        fine
    } else {
        chord_resample(&fine, spacing)
    };

    // Stop lines on the route, in base arc length.
    let mut stops_base: Vec<(String, ControlKind, f64)> = Vec::new();
    for c in controls {
        for (piece, offset) in pieces.iter().zip(&piece_offsets) {
            if c.lane_id == piece.lane && c.stop_line_s >= piece.from && c.stop_line_s <= piece.to {
                stops_base.push((c.id.clone(), c.kind, offset + c.stop_line_s - piece.from));
                break;
            }
        }
    }

    let n = dense.len();
    let s_of = |k: usize| k as f64 * spacing;
    // Base arc length → dense arc length (monotone piecewise-linear map).
    let to_dense_s = |b: f64| -> f64 {
        if n == 1 {
            return 0.0;
        }
        let k = dense.partition_point(|d| d.base_s <= b);
        if k == 0 {
            return 0.0;
        }
        if k >= n {
            return s_of(n - 1) + (b - dense[n - 1].base_s);
        }
        let (a, c) = (&dense[k - 1], &dense[k]);
        let t = (b - a.base_s) / (c.base_s - a.base_s).max(1e-12);
        s_of(k - 1) + t * spacing
    };
    let mut stops: Vec<PathStop> = stops_base
        .into_iter()
        .map(|(id, kind, b)| PathStop {
            control_id: id,
            kind,
            s: to_dense_s(b),
        })
        .collect();
    stops.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.control_id.cmp(&b.control_id)));

    let points = (0..n)
        .map(|k| {
            let here = dense[k].pos;
            let yaw = if n == 1 {
                targets[0].yaw
            } else if k + 1 < n {
                (dense[k + 1].pos - here).angle()
            } else {
                (here - dense[k - 1].pos).angle()
            };
            let s = s_of(k);
            let next = |kind: ControlKind| {
                stops
                    .iter()
                    .filter(|st| st.kind == kind && st.s >= s)
                    .map(|st| st.s - s)
                    .fold(f64::INFINITY, f64::min)
            };
            PathPoint {
                pose: Pose2D::new(here.x, here.y, yaw),
                s,
                speed_limit: lanes.lane(&dense[k].lane).map_or(f64::INFINITY, |l| l.speed_limit),
                dist_to_next_light: next(ControlKind::TrafficLight),
                dist_to_next_stop: next(ControlKind::StopSign),
                lane_id: dense[k].lane.clone(),
            }
        })
        .collect();
    Ok(DensePath::new(points, spacing, stops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Lane, LightState};

    fn straight_graph() -> LaneGraph {
        LaneGraph::new(vec![Lane::straight("main", Vec2D::new(0.0, 0.0), 0.0, 300.0, 10.0)])
    }

    fn two_lane_graph() -> LaneGraph {
        let mut right = Lane::straight("r", Vec2D::new(0.0, 0.0), 0.0, 200.0, 10.0);
        let mut left = Lane::straight("l", Vec2D::new(0.0, 3.5), 0.0, 200.0, 10.0);
        right.left = Some("l".into());
        left.right = Some("r".into());
        LaneGraph::new(vec![right, left])
    }

    #[test]
    fn straight_route_point_count_and_no_lights() {
        let g = straight_graph();
        let t = [Pose2D::new(10.0, 0.0, 0.0), Pose2D::new(160.0, 0.0, 0.0)];
        let path = plan_path(&g, &t, &[], &[], 1.0).unwrap();
        assert_eq!(path.len(), 151);
        for (k, p) in path.points.iter().enumerate() {
            assert!((p.pose.x - (10.0 + k as f64)).abs() < 1e-6);
            assert_eq!(p.s, k as f64);
            assert!(p.dist_to_next_light.is_infinite());
            assert_eq!(p.speed_limit, 10.0);
        }
    }

    #[test]
    fn single_target_gives_one_point() {
        let g = straight_graph();
        let path = plan_path(&g, &[Pose2D::new(42.0, 0.3, 0.0)], &[], &[], 1.0).unwrap();
        assert_eq!(path.len(), 1);
        assert!((path.points[0].pose.x - 42.0).abs() < 1e-12);
    }

    #[test]
    fn target_off_map_is_reported() {
        let g = straight_graph();
        let err = plan_path(&g, &[Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(50.0, 9.0, 0.0)], &[], &[], 1.0);
        assert_eq!(err.unwrap_err(), ExpertError::TargetOffMap { target_index: 1 });
    }

    #[test]
    fn unreachable_target_names_index() {
        // Two disconnected lanes: the second target lies behind the first.
        let g = straight_graph();
        let err = plan_path(
            &g,
            &[Pose2D::new(5.0, 0.0, 0.0), Pose2D::new(100.0, 0.0, 0.0), Pose2D::new(50.0, 0.0, 0.0)],
            &[],
            &[],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, ExpertError::PathNotFound { target_index: 2, .. }));
    }

    #[test]
    fn astar_prefers_shorter_branch() {
        // a splits into a long detour and a short link, both rejoining at c.
        let a = Lane::new("a", vec![Vec2D::new(0.0, 0.0), Vec2D::new(50.0, 0.0)], 10.0);
        let short = Lane::new("short", vec![Vec2D::new(50.0, 0.0), Vec2D::new(100.0, 0.0)], 10.0);
        let long = Lane::new(
            "long",
            vec![Vec2D::new(50.0, 0.0), Vec2D::new(75.0, 40.0), Vec2D::new(100.0, 0.0)],
            10.0,
        );
        let c = Lane::new("c", vec![Vec2D::new(100.0, 0.0), Vec2D::new(150.0, 0.0)], 10.0);
        let mut lanes = vec![a, long, short, c];
        lanes[0].successors = vec!["long".into(), "short".into()];
        lanes[1].successors = vec!["c".into()];
        lanes[2].successors = vec!["c".into()];
        let g = LaneGraph::new(lanes);
        let path = plan_path(&g, &[Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(140.0, 0.0, 0.0)], &[], &[], 1.0).unwrap();
        assert_eq!(path.len(), 141);
        assert!(path.points.iter().all(|p| p.lane_id != "long"));
        assert!(path.points.iter().any(|p| p.lane_id == "short"));
    }

    #[test]
    fn curved_path_keeps_exact_spacing() {
        let pts: Vec<Vec2D> = (0..=90)
            .map(|d| {
                let a = (d as f64).to_radians();
                Vec2D::new(30.0 * a.sin(), 30.0 - 30.0 * a.cos())
            })
            .collect();
        let g = LaneGraph::new(vec![Lane::new("arc", pts, 8.0)]);
        let path = plan_path(&g, &[Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(30.0, 30.0, 1.5707)], &[], &[], 1.0).unwrap();
        for w in path.points.windows(2) {
            let d = w[0].pose.position().distance(w[1].pose.position());
            assert!((d - 1.0).abs() < 1e-6, "spacing {d}");
            assert!(w[1].s > w[0].s);
        }
        assert!(path.len() > 40);
    }

    #[test]
    fn light_distances_follow_stop_line() {
        let g = straight_graph();
        let light = TrafficControl {
            id: "tl".into(),
            kind: ControlKind::TrafficLight,
            pose: Pose2D::new(80.0, -3.0, 0.0),
            lane_id: "main".into(),
            stop_line_s: 80.0,
            light_state: LightState::Red,
            affects_ego: true,
            cycle: None,
        };
        let t = [Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(150.0, 0.0, 0.0)];
        let path = plan_path(&g, &t, &[], &[light], 1.0).unwrap();
        assert_eq!(path.stops.len(), 1);
        assert!((path.stops[0].s - 80.0).abs() < 1e-6);
        assert!((path.points[30].dist_to_next_light - 50.0).abs() < 1e-6);
        assert!(path.points[81].dist_to_next_light.is_infinite());
        assert!(path.points[10].dist_to_next_stop.is_infinite());
    }

    #[test]
    fn shift_reaches_neighbor_centerline_mid_interval() {
        let g = two_lane_graph();
        let shift = PathShift {
            s_start: 60.0,
            s_end: 120.0,
            direction: ShiftDirection::Left,
        };
        let t = [Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(190.0, 0.0, 0.0)];
        let path = plan_path(&g, &t, &[shift], &[], 1.0).unwrap();
        // Construction oracle: lane-center distance between the two lanes.
        let lane_gap = g.lane("l").unwrap().point_at(90.0).position().distance(g.lane("r").unwrap().point_at(90.0).position());
        let mid = path.pose_at(path.project(Vec2D::new(90.0, 3.5)).s);
        assert!((mid.y - lane_gap).abs() < 1e-6, "mid offset {}", mid.y);
        let max_offset = path.points.iter().map(|p| p.pose.y).fold(f64::MIN, f64::max);
        assert!((max_offset - lane_gap).abs() < 1e-6);
        assert!(path.points[10].pose.y.abs() < 1e-9);
        assert!(path.points.last().unwrap().pose.y.abs() < 1e-9);
        for w in path.points.windows(2) {
            assert!((w[0].pose.position().distance(w[1].pose.position()) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shift_without_neighbor_fails() {
        let g = straight_graph();
        let shift = PathShift {
            s_start: 10.0,
            s_end: 40.0,
            direction: ShiftDirection::Right,
        };
        let t = [Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(100.0, 0.0, 0.0)];
        assert!(matches!(plan_path(&g, &t, &[shift], &[], 1.0), Err(ExpertError::InvalidShift(_))));
    }

    #[test]
    fn projections_agree() {
        let g = straight_graph();
        let path = plan_path(&g, &[Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(200.0, 0.0, 0.0)], &[], &[], 1.0).unwrap();
        let p = Vec2D::new(57.3, -1.2);
        let a = path.project(p);
        let b = path.project_within(p, 5.0).unwrap();
        let c = path.project_near_index(p, 50, 10);
        assert!((a.s - 57.3).abs() < 1e-9 && (a.lateral + 1.2).abs() < 1e-9);
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(path.project_within(Vec2D::new(57.0, 30.0), 5.0).is_none());
    }
}
