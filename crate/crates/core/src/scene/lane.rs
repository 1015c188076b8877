//! Lane graph loaded from JSON. Each lane is a centerline polyline with a speed
//! limit, successor lanes and optional left/right neighbors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene::SceneError;
use crate::{Pose2D, Vec2D};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    pub centerline: Vec<Pose2D>,
    pub speed_limit: f64,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub junction: bool,
    #[serde(skip)]
    cum: Vec<f64>,
}

/// Closest point on a lane centerline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneProjection {
    pub s: f64,
    /// Signed offset, positive to the left of travel direction.
    pub lateral: f64,
    pub distance: f64,
}

impl Lane {
    pub fn new(id: impl Into<String>, points: Vec<Vec2D>, speed_limit: f64) -> Self {
        let mut lane = Self {
            id: id.into(),
            centerline: points.into_iter().map(|p| Pose2D::new(p.x, p.y, 0.0)).collect(),
            speed_limit,
            successors: Vec::new(),
            left: None,
            right: None,
            junction: false,
            cum: Vec::new(),
        };
        lane.prepare();
        lane
    }

    /// Straight lane from `start` along `yaw`.
    pub fn straight(id: impl Into<String>, start: Vec2D, yaw: f64, length: f64, speed_limit: f64) -> Self {
        let end = start + Vec2D::from_angle(yaw) * length;
        Self::new(id, vec![start, end], speed_limit)
    }

    /// Recomputes segment headings and cumulative arc length.
    fn prepare(&mut self) {
        let n = self.centerline.len();
        self.cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            if i > 0 {
                acc += self.centerline[i - 1].position().distance(self.centerline[i].position());
            }
            self.cum.push(acc);
        }
        for i in 0..n {
            let (a, b) = if i + 1 < n { (i, i + 1) } else { (i.saturating_sub(1), i) };
            if a != b {
                let yaw = (self.centerline[b].position() - self.centerline[a].position()).angle();
                self.centerline[i] = Pose2D::new(self.centerline[i].x, self.centerline[i].y, yaw);
            }
        }
    }

    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    fn segment_at(&self, s: f64) -> usize {
        let i = self.cum.partition_point(|&c| c <= s);
        i.saturating_sub(1).min(self.centerline.len().saturating_sub(2))
    }

    /// Pose on the centerline at arc length `s`, clamped to the lane extent.
    pub fn point_at(&self, s: f64) -> Pose2D {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let a = self.centerline[i].position();
        let b = self.centerline[i + 1].position();
        let seg = self.cum[i + 1] - self.cum[i];
        let t = if seg > 0.0 { (s - self.cum[i]) / seg } else { 0.0 };
        let p = a.lerp(b, t);
        Pose2D::new(p.x, p.y, (b - a).angle())
    }

    pub fn project(&self, p: Vec2D) -> LaneProjection {
        let mut best = LaneProjection {
            s: 0.0,
            lateral: 0.0,
            distance: f64::INFINITY,
        };
        for i in 0..self.centerline.len() - 1 {
            let a = self.centerline[i].position();
            let b = self.centerline[i + 1].position();
            let d = b - a;
            let len2 = d.dot(d);
            let t = if len2 > 0.0 { ((p - a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let q = a + d * t;
            let dist = p.distance(q);
            if dist < best.distance {
                let len = len2.sqrt();
                let lateral = if len > 0.0 { d.cross(p - a) / len } else { 0.0 };
                best = LaneProjection {
                    s: self.cum[i] + t * len,
                    lateral,
                    distance: dist,
                };
            }
        }
        best
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "LaneGraphFile", into = "LaneGraphFile")]
pub struct LaneGraph {
    lanes: Vec<Lane>,
    index: BTreeMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct LaneGraphFile {
    lanes: Vec<Lane>,
}

impl From<LaneGraphFile> for LaneGraph {
    fn from(f: LaneGraphFile) -> Self {
        LaneGraph::new(f.lanes)
    }
}

impl From<LaneGraph> for LaneGraphFile {
    fn from(g: LaneGraph) -> Self {
        LaneGraphFile { lanes: g.lanes }
    }
}

impl LaneGraph {
    pub fn new(mut lanes: Vec<Lane>) -> Self {
        for lane in &mut lanes {
            lane.prepare();
        }
        let index = lanes.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        Self { lanes, index }
    }

    pub fn from_json_str(s: &str) -> Result<Self, SceneError> {
        let g: LaneGraph = serde_json::from_str(s).map_err(|e| SceneError::Parse(e.to_string()))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.index.get(id).map(|&i| &self.lanes[i])
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.index.len() != self.lanes.len() {
            return Err(SceneError::Invalid("duplicate lane id".into()));
        }
        for lane in &self.lanes {
            if lane.centerline.len() < 2 {
                return Err(SceneError::Invalid(format!("lane {} needs at least 2 centerline points", lane.id)));
            }
            if !(lane.speed_limit > 0.0 && lane.speed_limit.is_finite()) {
                return Err(SceneError::Invalid(format!("lane {} speed limit must be positive", lane.id)));
            }
            let refs = lane.successors.iter().chain(lane.left.iter()).chain(lane.right.iter());
            for r in refs {
                if self.lane(r).is_none() {
                    return Err(SceneError::Invalid(format!("lane {} references unknown lane {r}", lane.id)));
                }
            }
        }
        Ok(())
    }

    /// Nearest lane centerline within `max_dist`; ties resolve to graph order.
    pub fn nearest_lane(&self, p: Vec2D, max_dist: f64) -> Option<(&Lane, LaneProjection)> {
        let mut best: Option<(&Lane, LaneProjection)> = None;
        for lane in &self.lanes {
            let proj = lane.project(p);
            if proj.distance <= max_dist && best.map_or(true, |(_, b)| proj.distance < b.distance) {
                best = Some((lane, proj));
            }
        }
        best
    }

    /// Like [`nearest_lane`](Self::nearest_lane) but prefers lanes whose heading
    /// agrees with `yaw` (within 90°).
    pub fn nearest_aligned_lane(&self, pose: &Pose2D, max_dist: f64) -> Option<(&Lane, LaneProjection)> {
        let mut best: Option<(&Lane, LaneProjection)> = None;
        for lane in &self.lanes {
            let proj = lane.project(pose.position());
            let heading = lane.point_at(proj.s).yaw;
            let aligned = crate::scene::geometry::normalize_angle(heading - pose.yaw).abs() < std::f64::consts::FRAC_PI_2;
            if aligned && proj.distance <= max_dist && best.map_or(true, |(_, b)| proj.distance < b.distance) {
                best = Some((lane, proj));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_lane_geometry() {
        let lane = Lane::straight("a", Vec2D::new(0.0, 0.0), 0.0, 100.0, 10.0);
        assert_eq!(lane.length(), 100.0);
        let p = lane.point_at(42.0);
        assert!((p.x - 42.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        let proj = lane.project(Vec2D::new(30.0, 2.0));
        assert!((proj.s - 30.0).abs() < 1e-12);
        assert!((proj.lateral - 2.0).abs() < 1e-12);
        assert!((lane.project(Vec2D::new(30.0, -1.0)).lateral + 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let json = r#"{"lanes":[
            {"id":"a","centerline":[{"x":0,"y":0,"yaw":0},{"x":50,"y":0,"yaw":0}],"speed_limit":10,"successors":["b"]},
            {"id":"b","centerline":[{"x":50,"y":0,"yaw":0},{"x":100,"y":0,"yaw":0}],"speed_limit":8}
        ]}"#;
        let g = LaneGraph::from_json_str(json).unwrap();
        assert_eq!(g.lane("b").unwrap().length(), 50.0);
        let again = LaneGraph::from_json_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(again, g);

        let dangling = json.replace("[\"b\"]", "[\"zz\"]");
        assert!(matches!(LaneGraph::from_json_str(&dangling), Err(SceneError::Invalid(_))));
        let short = r#"{"lanes":[{"id":"a","centerline":[{"x":0,"y":0,"yaw":0}],"speed_limit":10}]}"#;
        assert!(LaneGraph::from_json_str(short).is_err());
    }

    #[test]
    fn nearest_lane_respects_radius() {
        let g = LaneGraph::new(vec![
            Lane::straight("a", Vec2D::new(0.0, 0.0), 0.0, 100.0, 10.0),
            Lane::straight("b", Vec2D::new(0.0, 3.5), 0.0, 100.0, 10.0),
        ]);
        assert_eq!(g.nearest_lane(Vec2D::new(10.0, 2.9), 5.0).unwrap().0.id, "b");
        assert!(g.nearest_lane(Vec2D::new(10.0, 20.0), 5.0).is_none());
    }
}
