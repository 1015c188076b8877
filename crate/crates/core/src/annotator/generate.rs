//! Keyframe selection, c-tag assignment and template expansion into QA graphs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotator::ctag::CTag;
use crate::annotator::graph::{KeyObjectInfo, QAGraph, QANode, Stage};
use crate::annotator::templates::{fill, Templates};
use crate::annotator::AnnotateError;
use crate::expert::{DecisionLabel, Proposal};
use crate::labels::{behavior_label, motion_label, BehaviorLabel, BinThresholds, LabelError, MOTION_DT, MOTION_POINTS};
use crate::metrics::SceneFutures;
use crate::provenance::{config_hash, Provenance};
use crate::scene::{ActorKind, ActorState, CameraRig, ControlKind, LaneGraph, WorldState};
use crate::sim::{RolloutLog, TickRecord};
use crate::MotionLabel;

/// Minimum time between keyframes (s).
pub const KEYFRAME_SPACING: f64 = 0.5;

/// Annotation samples where the expert's decision label changes.
pub fn extract_keyframes(log: &RolloutLog) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<DecisionLabel> = None;
    let mut last_time = f64::NEG_INFINITY;
    for i in log.annotation_samples() {
        let r = &log.records[i];
        let changed = prev != Some(r.decision);
        if changed && r.time - last_time >= KEYFRAME_SPACING - 1e-9 {
            out.push(i);
            last_time = r.time;
        }
        prev = Some(r.decision);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub thresholds: BinThresholds,
    pub motion_points: usize,
    pub motion_dt: f64,
    /// Objects farther than this are only tagged when they are the leading entity.
    pub importance_radius: f64,
    /// Lateral reach from the ego lane for objects without a lane.
    pub lane_reach: f64,
    /// Traffic controls beyond this distance get no perception node.
    pub control_range: f64,
    pub rig: CameraRig,
    /// Custom template file; the built-in set is used when absent.
    pub templates: Option<PathBuf>,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            thresholds: BinThresholds::default(),
            motion_points: MOTION_POINTS,
            motion_dt: MOTION_DT,
            importance_radius: 40.0,
            lane_reach: 7.0,
            control_range: 80.0,
            rig: CameraRig::default(),
            templates: None,
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        self.thresholds.validate()?;
        self.rig.validate().map_err(|e| AnnotateError::Config(e.to_string()))?;
        if self.motion_points == 0 || !(self.motion_dt > 0.0) {
            return Err(AnnotateError::Config("motion label needs at least one point and dt > 0".into()));
        }
        if !(self.importance_radius >= 0.0 && self.lane_reach >= 0.0 && self.control_range >= 0.0) {
            return Err(AnnotateError::Config("distances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn load_templates(&self) -> Result<Templates, AnnotateError> {
        match &self.templates {
            Some(p) => Templates::load(p).map_err(AnnotateError::Config),
            None => Ok(Templates::default()),
        }
    }
}

/// C-tags of the important actors, by tag index, plus their descriptions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CTagSet {
    pub tags: Vec<(String, CTag)>,
    pub infos: BTreeMap<String, KeyObjectInfo>,
}

impl CTagSet {
    pub fn get(&self, actor: &str) -> Option<&CTag> {
        self.tags.iter().find(|(id, _)| id == actor).map(|(_, t)| t)
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }
}

fn ego_lane_ids(world: &WorldState, lanes: &LaneGraph) -> (Option<String>, Vec<String>) {
    let lane = lanes
        .nearest_aligned_lane(&world.ego.pose, 3.0)
        .map(|(l, _)| l)
        .or_else(|| world.ego.lane_id.as_deref().and_then(|id| lanes.lane(id)));
    match lane {
        Some(l) => {
            let mut ids = vec![l.id.clone()];
            ids.extend(l.left.iter().cloned());
            ids.extend(l.right.iter().cloned());
            (Some(l.id.clone()), ids)
        }
        None => (None, Vec::new()),
    }
}

fn on_or_near_ego_lane(actor: &ActorState, world: &WorldState, lanes: &LaneGraph, near: &[String], reach: f64) -> bool {
    if let Some(id) = &actor.lane_id {
        return near.contains(id);
    }
    let Some(ego_lane) = near.first().and_then(|id| lanes.lane(id)) else {
        // No map around the ego: fall back to lateral offset in the ego frame.
        return world.ego.pose.to_local(actor.pose.position()).y.abs() <= reach;
    };
    ego_lane.project(actor.pose.position()).distance <= reach
}

fn object_height(kind: ActorKind) -> f64 {
    match kind {
        ActorKind::Truck => 3.5,
        ActorKind::Van => 2.2,
        ActorKind::Pedestrian => 1.8,
        ActorKind::Bicycle => 1.7,
        _ => 1.5,
    }
}

const CAMERA_HEIGHT: f64 = 1.6;

/// Image box of an actor in the camera that sees its center (flat ground).
fn image_box(actor: &ActorState, ego: &WorldState, rig: &CameraRig, tag: &CTag) -> [f64; 4] {
    let cam = rig.camera(tag.camera).expect("tag camera comes from the rig");
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mut u_min = f64::INFINITY;
    let mut u_max = f64::NEG_INFINITY;
    let mut depth = f64::INFINITY;
    for c in actor.bbox().corners() {
        let local = ego.ego.pose.to_local(c);
        let angle = cam.image_angle(local.angle()).clamp(-1.5, 1.5);
        let u = (cam.focal * angle.tan() + w / 2.0).clamp(0.0, w);
        u_min = u_min.min(u);
        u_max = u_max.max(u);
        depth = depth.min((local.norm() * angle.cos()).max(0.5));
    }
    let top = (h / 2.0 - cam.focal * (object_height(actor.kind) - CAMERA_HEIGHT) / depth).clamp(0.0, h);
    let bottom = (h / 2.0 + cam.focal * CAMERA_HEIGHT / depth).clamp(0.0, h);
    let r = |x: f64| (x * 10.0).round() / 10.0;
    [r(u_min), r(top), r(u_max), r(bottom)]
}

fn category(kind: ActorKind) -> &'static str {
    match kind {
        ActorKind::Pedestrian => "Pedestrian",
        ActorKind::StaticObstacle => "Static object",
        _ => "Vehicle",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Moving,
    Stopped,
    Parked,
    Crossing,
    Walking,
}

fn status(actor: &ActorState, world: &WorldState) -> Status {
    if actor.kind == ActorKind::StaticObstacle {
        return Status::Parked;
    }
    if actor.speed < 0.1 {
        return Status::Stopped;
    }
    if actor.kind == ActorKind::Pedestrian {
        let rel = crate::scene::normalize_angle(actor.pose.yaw - world.ego.pose.yaw);
        return if rel.sin().abs() > 0.7 { Status::Crossing } else { Status::Walking };
    }
    Status::Moving
}

fn status_text(s: Status, t: &Templates) -> &str {
    match s {
        Status::Moving => &t.status.moving,
        Status::Stopped => &t.status.stopped,
        Status::Parked => &t.status.parked,
        Status::Crossing => &t.status.crossing,
        Status::Walking => &t.status.walking,
    }
}

fn description(actor: &ActorState) -> String {
    let noun = match actor.attributes.get("type") {
        Some(t) if actor.kind == ActorKind::Pedestrian => format!("{t} {}", actor.kind.noun()),
        Some(t) => t.clone(),
        None => actor.kind.noun().to_string(),
    };
    match actor.attributes.get("color") {
        Some(c) if actor.kind == ActorKind::Pedestrian => format!("{noun} in {c}"),
        Some(c) => format!("{c} {noun}"),
        None => noun,
    }
}

/// Tags important actors: near the ego (within `config.importance_radius`) and on or
/// beside its lane, or the current leading entity. Indices follow distance.
pub fn make_ctags(world: &WorldState, lanes: &LaneGraph, leading: Option<&str>, config: &AnnotatorConfig) -> CTagSet {
    let (_, near_lanes) = ego_lane_ids(world, lanes);
    let ego_pos = world.ego.pose.position();
    let mut picked: Vec<(f64, &ActorState)> = world
        .actors
        .iter()
        .filter_map(|a| {
            let d = a.pose.position().distance(ego_pos);
            let is_leading = leading == Some(a.id.as_str());
            let near = d <= config.importance_radius && on_or_near_ego_lane(a, world, lanes, &near_lanes, config.lane_reach);
            (is_leading || near).then_some((d, a))
        })
        .collect();
    picked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
    let mut set = CTagSet::default();
    for (d, actor) in picked {
        let Some(proj) = config.rig.project(actor.pose.position(), &world.ego.pose) else {
            log::debug!("actor {} at {d:.1} m is outside every camera", actor.id);
            continue;
        };
        let tag = CTag::new(set.tags.len() as u32 + 1, proj.camera, proj.u, proj.v);
        let info = KeyObjectInfo {
            category: category(actor.kind).to_string(),
            status: format!("{:?}", status(actor, world)),
            description: description(actor),
            bbox_2d: image_box(actor, world, &config.rig, &tag),
        };
        set.infos.insert(tag.to_string(), info);
        set.tags.push((actor.id.as_str().to_string(), tag));
    }
    set
}

/// Expert decision at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionInfo {
    pub label: DecisionLabel,
    pub proposal: Proposal,
    pub leading: Option<String>,
    pub target_speed: f64,
}

impl From<&TickRecord> for DecisionInfo {
    fn from(r: &TickRecord) -> Self {
        Self {
            label: r.decision,
            proposal: r.proposal,
            leading: r.leading.clone(),
            target_speed: r.target_speed,
        }
    }
}

pub struct FrameInput<'a> {
    pub frame_id: &'a str,
    pub world: &'a WorldState,
    pub lanes: &'a LaneGraph,
    pub decision: &'a DecisionInfo,
    pub behavior: Option<BehaviorLabel>,
    pub motion: Option<&'a MotionLabel>,
    pub ctags: &'a CTagSet,
    pub templates: &'a Templates,
    pub control_range: f64,
}

fn with_tag<'a>(tag: &'a str, extra: &[(&'a str, &'a str)]) -> Vec<(&'a str, &'a str)> {
    let mut v = vec![("tag", tag)];
    v.extend_from_slice(extra);
    v
}

fn dist_text(d: f64) -> String {
    format!("{:.0}", d.abs())
}

/// Relevant controls ahead on the ego's lane, with distance to the stop line.
fn controls_ahead<'a>(input: &FrameInput<'a>) -> Vec<(&'a crate::scene::TrafficControl, f64)> {
    let ego = input.world.ego.pose.position();
    input
        .world
        .controls
        .iter()
        .filter(|c| c.affects_ego)
        .filter_map(|c| {
            let lane = input.lanes.lane(&c.lane_id)?;
            let proj = lane.project(ego);
            let d = c.stop_line_s - proj.s;
            (proj.distance < 3.0 && d > 0.0 && d <= input.control_range).then_some((c, d))
        })
        .collect()
}

pub fn generate_qa(input: &FrameInput<'_>) -> Result<QAGraph, AnnotateError> {
    let behavior = input.behavior.ok_or(AnnotateError::MissingLabel("behavior"))?;
    let motion = input.motion.ok_or(AnnotateError::MissingLabel("motion"))?;
    let t = input.templates;
    let world = input.world;
    let mut g = QAGraph::new(input.frame_id);
    g.key_object_infos = input.ctags.infos.clone();

    let (ego_lane, _) = ego_lane_ids(world, input.lanes);
    let junction = ego_lane.as_deref().and_then(|id| input.lanes.lane(id)).is_some_and(|l| l.junction);
    let road_answer = if junction { &t.road.at_junction } else { &t.road.not_at_junction };
    g.add_node(QANode::new("p1_road", Stage::P1, &t.road.question, road_answer))?;
    let mut upstream = vec!["p1_road".to_string()];

    let mut ego_parents = Vec::new();
    for (c, d) in controls_ahead(input) {
        let (id, tpl, state) = match c.kind {
            ControlKind::TrafficLight => (format!("p1_light_{}", c.id), &t.traffic_light, c.light_state.as_str()),
            ControlKind::StopSign => (format!("p1_stop_{}", c.id), &t.stop_sign, ""),
        };
        let answer = fill(&tpl.answer, &[("dist", &dist_text(d)), ("state", state)]);
        g.add_node(QANode::new(&id, Stage::P1, &tpl.question, answer))?;
        ego_parents.push(id.clone());
        upstream.push(id);
    }

    let leading = input.decision.leading.as_deref();
    let stopping = matches!(input.decision.label, DecisionLabel::Stop) || input.decision.target_speed < 0.1;
    let mut chains = Vec::new();
    for (actor_id, tag) in &input.ctags.tags {
        let Some(actor) = world.actors.iter().find(|a| a.id.as_str() == actor_id) else {
            continue;
        };
        let k = tag.index;
        let tag_s = tag.to_string();
        let st = status(actor, world);
        let local = world.ego.pose.to_local(actor.pose.position());
        let same_lane = match (&actor.lane_id, &ego_lane) {
            (Some(a), Some(e)) => a == e,
            _ => local.y.abs() < 1.75,
        };
        let dist = dist_text(local.norm());
        let pos_tpl = if same_lane && local.x >= 0.0 {
            &t.position.ahead
        } else if same_lane {
            &t.position.behind
        } else if local.y > 0.0 {
            &t.position.left
        } else {
            &t.position.right
        };
        let position = fill(pos_tpl, &[("dist", &dist)]);
        let info = &input.ctags.infos[&tag_s];
        let p1_answer = fill(
            &t.object.answer,
            &with_tag(&tag_s, &[("description", &info.description), ("status", status_text(st, t)), ("position", &position)]),
        );
        let p2_answer = match st {
            Status::Parked | Status::Stopped => &t.prediction.stay,
            Status::Crossing => &t.prediction.cross,
            Status::Walking => &t.prediction.walk,
            Status::Moving if actor.accel < -1.0 => &t.prediction.slow,
            Status::Moving => &t.prediction.keep,
        };
        let p3_answer = if leading == Some(actor_id.as_str()) {
            if stopping {
                &t.planning_object.stop_for
            } else {
                &t.planning_object.follow
            }
        } else if input.decision.proposal == Proposal::Zero && st == Status::Crossing {
            &t.planning_object.yield_to
        } else {
            &t.planning_object.ignore
        };
        let ids = [format!("p1_obj_c{k}"), format!("p2_obj_c{k}"), format!("p3_obj_c{k}")];
        let nodes = [
            (Stage::P1, fill(&t.object.question, &with_tag(&tag_s, &[])), fill(&p1_answer, &[])),
            (Stage::P2, fill(&t.prediction.question, &with_tag(&tag_s, &[])), fill(p2_answer, &with_tag(&tag_s, &[]))),
            (Stage::P3, fill(&t.planning_object.question, &with_tag(&tag_s, &[])), fill(p3_answer, &with_tag(&tag_s, &[]))),
        ];
        for (id, (stage, q, a)) in ids.iter().zip(nodes) {
            let mut node = QANode::new(id, stage, q, a);
            node.key_objects.push(tag_s.clone());
            g.add_node(node)?;
        }
        upstream.extend(ids.iter().cloned());
        chains.push(ids);
    }

    let pe = &t.planning_ego;
    let mut ego_answer = match input.decision.label {
        DecisionLabel::Accelerate => pe.accelerate.clone(),
        DecisionLabel::Cruise => pe.cruise.clone(),
        DecisionLabel::Brake => pe.brake.clone(),
        DecisionLabel::Stop => pe.stop.clone(),
    };
    if matches!(input.decision.label, DecisionLabel::Brake | DecisionLabel::Stop) {
        if let Some(lead) = leading {
            if let Some(c) = world.control(lead) {
                ego_answer.push_str(match c.kind {
                    ControlKind::TrafficLight => &pe.because_light,
                    ControlKind::StopSign => &pe.because_stop_sign,
                });
            } else if let Some(tag) = input.ctags.get(lead) {
                ego_answer.push_str(&fill(&pe.because_object, &[("tag", &tag.to_string())]));
            }
        }
    }
    ego_answer.push_str(&pe.end);
    g.add_node(QANode::new("p3_ego", Stage::P3, &pe.question, ego_answer))?;
    upstream.push("p3_ego".into());

    g.add_node(QANode::new("b", Stage::B, &t.behavior.question, behavior.to_string()))?;
    let dt = format!("{}", motion.dt);
    g.add_node(QANode::new("m", Stage::M, fill(&t.motion.question, &[("dt", &dt)]), motion.to_text()))?;

    for [p1, p2, p3] in &chains {
        g.add_edge(p1, p2)?;
        g.add_edge(p2, p3)?;
    }
    for p in &ego_parents {
        g.add_edge(p, "p3_ego")?;
    }
    for id in &upstream {
        g.add_edge(id, "b")?;
    }
    g.add_edge("b", "m")?;
    Ok(g)
}

pub const QA_FORMAT: &str = "driveforge.qa";
pub const QA_VERSION: u32 = 1;

/// Ground truth and QA graph of one keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub tick: u64,
    pub time: f64,
    pub decision: DecisionInfo,
    pub behavior: BehaviorLabel,
    pub motion: MotionLabel,
    /// Actor boxes at 1, 2 and 3 s in the keyframe ego frame; absent when the log ends earlier.
    pub futures: Option<SceneFutures<f64>>,
    /// Ego box (length, width).
    pub ego_size: (f64, f64),
    pub graph: QAGraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedFrame {
    pub frame_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaFile {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub scenario: String,
    pub templates: String,
    pub frames: Vec<FrameAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedFrame>,
}

impl QaFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("qa file serializes") + "\n"
    }

    pub fn from_json_str(text: &str) -> Result<Self, AnnotateError> {
        let f: Self = serde_json::from_str(text).map_err(|e| AnnotateError::Parse(e.to_string()))?;
        if f.format != QA_FORMAT || f.version != QA_VERSION {
            return Err(AnnotateError::Parse(format!("unsupported QA format {} v{}", f.format, f.version)));
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self, AnnotateError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnnotateError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| AnnotateError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<(), AnnotateError> {
        std::fs::write(path, self.to_json()).map_err(|e| AnnotateError::Io(format!("{}: {e}", path.display())))
    }

    pub fn frame(&self, frame_id: &str) -> Option<&FrameAnnotation> {
        self.frames.iter().find(|f| f.graph.frame_id == frame_id)
    }
}

pub fn frame_id(scenario: &str, tick: u64) -> String {
    format!("{scenario}_{tick:06}")
}

/// Actor boxes at 1, 2 and 3 s after `frame`, in the frame's ego coordinates.
pub fn scene_futures(log: &RolloutLog, frame: usize) -> Option<SceneFutures<f64>> {
    let origin = log.records[frame].world.ego.pose;
    let mut boxes: [Vec<crate::OrientedBox>; 3] = Default::default();
    for (h, slot) in crate::metrics::HORIZONS.iter().zip(boxes.iter_mut()) {
        let idx = frame + (h / log.dt()).round() as usize;
        let rec = log.records.get(idx)?;
        *slot = rec
            .world
            .actors
            .iter()
            .map(|a| a.bbox().with_center(origin.relative(&a.pose)))
            .collect();
    }
    Some(SceneFutures { boxes })
}

/// Annotates every keyframe of a rollout. Keyframes too close to the end of
/// the log for a motion label are skipped and listed in `skipped`.
pub fn annotate_log(log: &RolloutLog, config: &AnnotatorConfig, templates: &Templates) -> Result<QaFile, AnnotateError> {
    config.validate()?;
    if log.records.is_empty() {
        return Err(AnnotateError::EmptyLog);
    }
    let lanes = &log.header.lane_graph;
    let mut frames = Vec::new();
    let mut skipped = Vec::new();
    for k in extract_keyframes(log) {
        let rec = &log.records[k];
        let id = frame_id(&log.header.scenario, rec.tick);
        let motion = match motion_label(log, k, config.motion_points, config.motion_dt) {
            Ok(m) => m,
            Err(e @ LabelError::InsufficientHorizon { .. }) => {
                log::warn!("skipping keyframe {id}: {e}");
                skipped.push(SkippedFrame {
                    frame_id: id,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let behavior = behavior_label(&motion, &config.thresholds);
        let decision = DecisionInfo::from(rec);
        let ctags = make_ctags(&rec.world, lanes, decision.leading.as_deref(), config);
        let graph = generate_qa(&FrameInput {
            frame_id: &id,
            world: &rec.world,
            lanes,
            decision: &decision,
            behavior: Some(behavior),
            motion: Some(&motion),
            ctags: &ctags,
            templates,
            control_range: config.control_range,
        })?;
        frames.push(FrameAnnotation {
            tick: rec.tick,
            time: rec.time,
            decision,
            behavior,
            motion,
            futures: scene_futures(log, k),
            ego_size: (rec.world.ego.size.length, rec.world.ego.size.width),
            graph,
        });
    }
    let provenance = Provenance::new(config.hash(), log.header.seed).with_input(crate::provenance::InputDigest {
        name: format!("{}.jsonl", log.header.scenario),
        sha256: crate::provenance::sha256_hex(log.to_jsonl().as_bytes()),
    });
    Ok(QaFile {
        format: QA_FORMAT.to_string(),
        version: QA_VERSION,
        provenance,
        scenario: log.header.scenario.clone(),
        templates: templates.version.clone(),
        frames,
        skipped,
    })
}
