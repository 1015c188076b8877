//! Motion, behavior and language metrics.

pub mod judge;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::annotator::ctag::find_ctags;
use crate::labels::{BehaviorLabel, Trajectory};
use crate::num::Real;
use crate::provenance::Provenance;
use crate::scene::{obb_intersects, Obb, Pose2, Vec2};

pub use judge::{
    gpt_score, parse_score, score_batch, user_prompt, JudgeBackend, JudgeConfig, JudgeError, JudgeItem, JudgeMode, LiveJudge,
    MockJudge, ReplayCache, ReplayJudge, RetryPolicy, JUDGE_SYSTEM_PROMPT,
};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectory covers {0:.2} s, need at least 3 s")]
    ShortHorizon(f64),
    #[error("prediction and ground truth differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("{0} predictions for {1} ground-truth labels")]
    LengthMismatch(usize, usize),
}

/// Evaluation horizons in seconds.
pub const HORIZONS: [f64; 3] = [1.0, 2.0, 3.0];

/// Indices of the points at 1, 2 and 3 s.
pub fn horizon_indices<T: Real>(label: &Trajectory<T>) -> Result<[usize; 3], MetricsError> {
    let dt = label.dt.to_f64_lossy();
    let covered = dt * label.len() as f64;
    if !(dt > 0.0) || covered < 3.0 - 1e-9 {
        return Err(MetricsError::ShortHorizon(covered));
    }
    Ok(HORIZONS.map(|h| ((h / dt).round() as usize).saturating_sub(1)))
}

fn check_pair<T: Real>(pred: &Trajectory<T>, gt: &Trajectory<T>) -> Result<[usize; 3], MetricsError> {
    if pred.len() != gt.len() || pred.dt != gt.dt {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} points at {:?} s vs {} points at {:?} s",
            pred.len(),
            pred.dt,
            gt.len(),
            gt.dt
        )));
    }
    horizon_indices(gt)
}

pub fn ade<T: Real>(pred: &Trajectory<T>, gt: &Trajectory<T>) -> Result<T, MetricsError> {
    let idx = check_pair(pred, gt)?;
    let sum = idx.iter().fold(T::zero(), |acc, &i| acc + pred.offsets[i].distance(gt.offsets[i]));
    Ok(sum / T::lit(3.0))
}

pub fn fde<T: Real>(pred: &Trajectory<T>, gt: &Trajectory<T>) -> Result<T, MetricsError> {
    let idx = check_pair(pred, gt)?;
    Ok(pred.offsets[idx[2]].distance(gt.offsets[idx[2]]))
}

/// Ego box at predicted point `i`, heading along the direction of travel.
///
/// A zero-length step keeps the heading of the last moving step, or the
/// keyframe heading (0 in the ego frame) if the ego never moved.
pub fn ego_box_at<T: Real>(offsets: &[Vec2<T>], i: usize, length: T, width: T) -> Obb<T> {
    let eps = T::lit(1e-6);
    let mut yaw = T::zero();
    for j in (0..=i).rev() {
        let prev = if j == 0 { Vec2::zero() } else { offsets[j - 1] };
        let d = offsets[j] - prev;
        if d.norm() > eps {
            yaw = d.angle();
            break;
        }
    }
    Obb::new(Pose2::new(offsets[i].x, offsets[i].y, yaw), length, width)
}

/// Ground-truth actor boxes at 1, 2 and 3 s in the keyframe ego frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneFutures<T> {
    pub boxes: [Vec<Obb<T>>; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub rate: f64,
    pub per_horizon: [f64; 3],
    pub frames: usize,
    /// Frames without scene data, left out of the rate.
    pub excluded: usize,
}

pub fn collision_rate<T: Real>(
    preds: &[Trajectory<T>],
    scenes: &[Option<SceneFutures<T>>],
    ego_size: (T, T),
) -> Result<CollisionReport, MetricsError> {
    if preds.len() != scenes.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), scenes.len()));
    }
    let mut hits = [0usize; 3];
    let mut frames = 0;
    let mut excluded = 0;
    for (pred, scene) in preds.iter().zip(scenes) {
        let Some(scene) = scene else {
            excluded += 1;
            continue;
        };
        let idx = horizon_indices(pred)?;
        frames += 1;
        for (h, &i) in idx.iter().enumerate() {
            let ego = ego_box_at(&pred.offsets, i, ego_size.0, ego_size.1);
            if scene.boxes[h].iter().any(|b| obb_intersects(&ego, b)) {
                hits[h] += 1;
            }
        }
    }
    let per_horizon = hits.map(|k| if frames == 0 { 0.0 } else { k as f64 / frames as f64 });
    Ok(CollisionReport {
        rate: per_horizon.iter().sum::<f64>() / 3.0,
        per_horizon,
        frames,
        excluded,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BehaviorAccuracy {
    pub overall: f64,
    pub speed: f64,
    pub steer: f64,
}

pub fn behavior_accuracy(preds: &[BehaviorLabel], gts: &[BehaviorLabel]) -> Result<BehaviorAccuracy, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), gts.len()));
    }
    if preds.is_empty() {
        return Ok(BehaviorAccuracy::default());
    }
    let (mut both, mut speed, mut steer) = (0usize, 0usize, 0usize);
    for (p, g) in preds.iter().zip(gts) {
        let sp = p.speed == g.speed;
        let st = p.steer == g.steer;
        speed += sp as usize;
        steer += st as usize;
        both += (sp && st) as usize;
    }
    let n = preds.len() as f64;
    Ok(BehaviorAccuracy {
        overall: both as f64 / n,
        speed: speed as f64 / n,
        steer: steer as f64 / n,
    })
}

/// Lowercased word tokens; each c-tag counts as one canonical token.
pub fn answer_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut rest_start = 0;
    let push_words = |s: &str, out: &mut Vec<String>| {
        for w in s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            out.push(w.to_lowercase());
        }
    };
    for (span, tag) in find_ctags(text) {
        push_words(&text[rest_start..span.start], &mut tokens);
        match tag {
            Ok(t) => tokens.push(t.to_string()),
            Err(_) => push_words(&text[span.clone()], &mut tokens),
        }
        rest_start = span.end;
    }
    push_words(&text[rest_start..], &mut tokens);
    tokens
}

/// Token-level F1 between two answers.
pub fn answer_match(pred: &str, gt: &str) -> f64 {
    let p = answer_tokens(pred);
    let g = answer_tokens(gt);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub const COMPLETENESS_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Completeness {
    pub value: f64,
    /// Set when there were no scores; `value` is then 0.
    pub empty: bool,
}

/// Fraction of scores strictly above `threshold`.
pub fn completeness(scores: &[f64], threshold: f64) -> Completeness {
    if scores.is_empty() {
        log::warn!("completeness over zero nodes is reported as 0");
        return Completeness { value: 0.0, empty: true };
    }
    let above = scores.iter().filter(|&&s| s > threshold).count();
    Completeness {
        value: above as f64 / scores.len() as f64,
        empty: false,
    }
}

pub const REPORT_FORMAT: &str = "driveforge.report";

/// Everything `evaluate` writes. Node keys are `frame/node`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub format: String,
    pub provenance: Provenance,
    pub frames: usize,
    pub nodes: usize,
    pub ade: Option<f64>,
    pub fde: Option<f64>,
    pub collision: Option<CollisionReport>,
    pub behavior: Option<BehaviorAccuracy>,
    /// Name of the answer similarity used for `answer_scores` and completeness.
    pub answer_metric: String,
    pub answer_scores: BTreeMap<String, f64>,
    pub completeness: Completeness,
    pub gpt_scores: BTreeMap<String, u8>,
    /// Nodes the judge could not score, with the reason.
    pub unscored: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn new(provenance: Provenance) -> Self {
        Self {
            format: REPORT_FORMAT.to_string(),
            provenance,
            frames: 0,
            nodes: 0,
            ade: None,
            fde: None,
            collision: None,
            behavior: None,
            answer_metric: "token_f1".to_string(),
            answer_scores: BTreeMap::new(),
            completeness: Completeness::default(),
            gpt_scores: BTreeMap::new(),
            unscored: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Range checks on every fraction and score.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut frac = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} = {v} outside [0, 1]"));
            }
        };
        if let Some(c) = &self.collision {
            frac("collision.rate", c.rate);
        }
        if let Some(b) = &self.behavior {
            frac("behavior.overall", b.overall);
            frac("behavior.speed", b.speed);
            frac("behavior.steer", b.steer);
        }
        frac("completeness", self.completeness.value);
        for (k, v) in &self.answer_scores {
            frac(&format!("answer_scores[{k}]"), *v);
        }
        for (k, v) in &self.gpt_scores {
            if *v > 100 {
                out.push(format!("gpt_scores[{k}] = {v} above 100"));
            }
        }
        for (name, v) in [("ade", self.ade), ("fde", self.fde)] {
            if v.is_some_and(|v| !(v >= 0.0)) {
                out.push(format!("{name} must be non-negative"));
            }
        }
        out
    }
}
