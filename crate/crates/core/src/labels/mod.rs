//! Behavior and motion targets derived from rollouts, and the trajectory tokenizer.

pub mod tokens;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::scene::Vec2;
use crate::sim::RolloutLog;

pub use tokens::{detokenize, fit_token_bins, tokenize, AxisBins, BinMode, TokenBins, TokenError, EOT, NUM_BINS, SOT};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LabelError {
    #[error("rollout ends {shortfall:.3} s before the motion horizon")]
    InsufficientHorizon { shortfall: f64 },
    #[error("frame {0} is not in the rollout")]
    UnknownFrame(usize),
    #[error("invalid label parameters: {0}")]
    Invalid(String),
    #[error("cannot parse {what} from {text:?}")]
    Parse { what: &'static str, text: String },
}

/// Future offsets of the ego in its own frame at the keyframe (x forward, y left).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub offsets: Vec<Vec2<T>>,
    /// Seconds between consecutive points.
    pub dt: T,
}

impl<T: Real> Trajectory<T> {
    pub fn new(offsets: Vec<Vec2<T>>, dt: T) -> Self {
        Self { offsets, dt }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn horizon(&self) -> T {
        self.dt * T::from_usize(self.offsets.len()).unwrap_or_else(T::zero)
    }

    /// Mirror across the x axis (left ↔ right).
    pub fn mirrored(&self) -> Self {
        Self::new(self.offsets.iter().map(|p| Vec2::new(p.x, -p.y)).collect(), self.dt)
    }
}

impl Trajectory<f64> {
    /// `[(x1,y1),(x2,y2),...]` with two decimals.
    pub fn to_text(&self) -> String {
        let pts: Vec<String> = self.offsets.iter().map(|p| format!("({:.2},{:.2})", p.x, p.y)).collect();
        format!("[{}]", pts.join(","))
    }

    /// Reads the pairs written by [`Self::to_text`]; whitespace is ignored.
    pub fn from_text(text: &str, dt: f64) -> Result<Self, LabelError> {
        let err = || LabelError::Parse {
            what: "trajectory",
            text: text.to_string(),
        };
        let body: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let start = body.find('[').ok_or_else(err)?;
        let end = body.rfind(']').ok_or_else(err)?;
        let inner = body.get(start + 1..end).ok_or_else(err)?;
        let mut offsets = Vec::new();
        for pair in inner.split(')') {
            let pair = pair.trim_start_matches(',');
            if pair.is_empty() {
                continue;
            }
            let pair = pair.strip_prefix('(').ok_or_else(err)?;
            let (x, y) = pair.split_once(',').ok_or_else(err)?;
            offsets.push(Vec2::new(x.parse().map_err(|_| err())?, y.parse().map_err(|_| err())?));
        }
        if offsets.is_empty() {
            return Err(err());
        }
        Ok(Self::new(offsets, dt))
    }
}

/// Default number of motion points.
pub const MOTION_POINTS: usize = 6;
/// Default spacing of motion points (s).
pub const MOTION_DT: f64 = 0.5;

/// Ego-frame offsets of the future ego positions at `frame + k·dt`, k = 1..=n.
pub fn motion_label(log: &RolloutLog, frame: usize, n: usize, dt: f64) -> Result<Trajectory<f64>, LabelError> {
    if n == 0 || !(dt > 0.0) {
        return Err(LabelError::Invalid("need n ≥ 1 and dt > 0".into()));
    }
    let tick_dt = log.dt();
    let stride = dt / tick_dt;
    if (stride - stride.round()).abs() > 1e-6 {
        return Err(LabelError::Invalid(format!("dt {dt} is not a multiple of the tick length {tick_dt}")));
    }
    let stride = stride.round() as usize;
    let origin = log.records.get(frame).ok_or(LabelError::UnknownFrame(frame))?;
    let last = frame + n * stride;
    if last >= log.records.len() {
        let shortfall = (last - (log.records.len() - 1)) as f64 * tick_dt;
        return Err(LabelError::InsufficientHorizon { shortfall });
    }
    let pose = origin.world.ego.pose;
    let offsets = (1..=n)
        .map(|k| pose.to_local(log.records[frame + k * stride].world.ego.pose.position()))
        .collect();
    Ok(Trajectory::new(offsets, dt))
}

/// Per-interval displacement with the current position prepended as the origin.
pub fn interval_deltas<T: Real>(label: &Trajectory<T>) -> Vec<Vec2<T>> {
    let mut prev = Vec2::zero();
    label
        .offsets
        .iter()
        .map(|&p| {
            let d = p - prev;
            prev = p;
            d
        })
        .collect()
}

/// Left-fold prefix sum of deltas; inverse of [`interval_deltas`].
pub fn cumulative<T: Real>(deltas: &[Vec2<T>]) -> Vec<Vec2<T>> {
    let mut acc = Vec2::zero();
    deltas
        .iter()
        .map(|&d| {
            acc = acc + d;
            acc
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedBin {
    Slow2,
    Slow1,
    Moderate,
    Fast1,
    Fast2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteerBin {
    Right2,
    Right1,
    Straight,
    Left1,
    Left2,
}

impl SpeedBin {
    pub const ALL: [SpeedBin; 5] = [SpeedBin::Slow2, SpeedBin::Slow1, SpeedBin::Moderate, SpeedBin::Fast1, SpeedBin::Fast2];

    pub fn phrase(self) -> &'static str {
        match self {
            SpeedBin::Slow2 => "driving very slowly",
            SpeedBin::Slow1 => "driving slowly",
            SpeedBin::Moderate => "driving with normal speed",
            SpeedBin::Fast1 => "driving fast",
            SpeedBin::Fast2 => "driving very fast",
        }
    }
}

impl SteerBin {
    pub const ALL: [SteerBin; 5] = [SteerBin::Right2, SteerBin::Right1, SteerBin::Straight, SteerBin::Left1, SteerBin::Left2];

    pub fn phrase(self) -> &'static str {
        match self {
            SteerBin::Right2 => "steering to the right",
            SteerBin::Right1 => "slightly steering to the right",
            SteerBin::Straight => "going straight",
            SteerBin::Left1 => "slightly steering to the left",
            SteerBin::Left2 => "steering to the left",
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            SteerBin::Right2 => SteerBin::Left2,
            SteerBin::Right1 => SteerBin::Left1,
            SteerBin::Straight => SteerBin::Straight,
            SteerBin::Left1 => SteerBin::Right1,
            SteerBin::Left2 => SteerBin::Right2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorLabel {
    pub speed: SpeedBin,
    pub steer: SteerBin,
}

impl BehaviorLabel {
    /// Finds the first phrase of each axis in `text`, preferring longer phrases.
    pub fn from_text(text: &str) -> Result<Self, LabelError> {
        let lower = text.to_lowercase();
        let pick = |phrases: Vec<(&'static str, usize)>| {
            let mut sorted = phrases;
            sorted.sort_by_key(|(p, _)| std::cmp::Reverse(p.len()));
            let mut masked = lower.clone();
            let mut found = None;
            for (p, i) in sorted {
                if let Some(pos) = masked.find(p) {
                    if found.is_none() {
                        found = Some(i);
                    }
                    masked.replace_range(pos..pos + p.len(), &" ".repeat(p.len()));
                }
            }
            found
        };
        let speed = pick(SpeedBin::ALL.iter().enumerate().map(|(i, b)| (b.phrase(), i)).collect());
        let steer = pick(SteerBin::ALL.iter().enumerate().map(|(i, b)| (b.phrase(), i)).collect());
        match (speed, steer) {
            (Some(s), Some(t)) => Ok(Self {
                speed: SpeedBin::ALL[s],
                steer: SteerBin::ALL[t],
            }),
            _ => Err(LabelError::Parse {
                what: "behavior",
                text: text.to_string(),
            }),
        }
    }
}

impl fmt::Display for BehaviorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "The ego vehicle is {}. The ego vehicle is {}.", self.steer.phrase(), self.speed.phrase())
    }
}

/// Bin edges on the mean interval displacement (m per interval).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub speed_edges: [f64; 4],
    pub steer_edges: [f64; 4],
}

impl Default for BinThresholds {
    fn default() -> Self {
        Self {
            speed_edges: [0.35, 1.0, 2.5, 4.5],
            steer_edges: [-1.0, -0.2, 0.2, 1.0],
        }
    }
}

impl BinThresholds {
    pub fn validate(&self) -> Result<(), LabelError> {
        let ascending = |e: &[f64; 4]| e.iter().all(|v| v.is_finite()) && e.windows(2).all(|w| w[0] < w[1]);
        if !ascending(&self.speed_edges) || !ascending(&self.steer_edges) {
            return Err(LabelError::Invalid("bin edges must be finite and strictly ascending".into()));
        }
        let s = &self.steer_edges;
        if (s[0] + s[3]).abs() > 1e-12 || (s[1] + s[2]).abs() > 1e-12 {
            return Err(LabelError::Invalid("steer edges must be symmetric about 0".into()));
        }
        Ok(())
    }

    /// Speed bin of a mean forward displacement. On an edge the value goes to
    /// the bin closer to `moderate`.
    pub fn speed_bin(&self, mean_dx: f64) -> SpeedBin {
        let e = &self.speed_edges;
        if mean_dx < e[0] {
            SpeedBin::Slow2
        } else if mean_dx < e[1] {
            SpeedBin::Slow1
        } else if mean_dx <= e[2] {
            SpeedBin::Moderate
        } else if mean_dx <= e[3] {
            SpeedBin::Fast1
        } else {
            SpeedBin::Fast2
        }
    }

    /// Steer bin of a mean lateral displacement (left positive). On an edge the
    /// value goes to the bin closer to `straight`.
    pub fn steer_bin(&self, mean_dy: f64) -> SteerBin {
        let e = &self.steer_edges;
        if mean_dy < e[0] {
            SteerBin::Right2
        } else if mean_dy < e[1] {
            SteerBin::Right1
        } else if mean_dy <= e[2] {
            SteerBin::Straight
        } else if mean_dy <= e[3] {
            SteerBin::Left1
        } else {
            SteerBin::Left2
        }
    }
}

/// Mean interval displacement along each axis.
pub fn mean_deltas<T: Real>(label: &Trajectory<T>) -> (T, T) {
    let deltas = interval_deltas(label);
    let n = T::from_usize(deltas.len().max(1)).unwrap_or_else(T::one);
    let sum = deltas.iter().fold(Vec2::zero(), |a, &d| a + d);
    (sum.x / n, sum.y / n)
}

pub fn behavior_label<T: Real>(label: &Trajectory<T>, th: &BinThresholds) -> BehaviorLabel {
    let (dx, dy) = mean_deltas(label);
    BehaviorLabel {
        speed: th.speed_bin(dx.to_f64_lossy()),
        steer: th.steer_bin(dy.to_f64_lossy()),
    }
}
