//! Lateral PID on a lookahead point and the linear longitudinal controller.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expert::path::DensePath;
use crate::expert::ExpertError;
use crate::scene::normalize_angle;
use crate::Pose2D;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the accumulated error integral (rad·s).
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.05,
            kd: 0.2,
            integral_limit: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LateralPid {
    pub gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl LateralPid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_error: None,
        }
    }

    /// PID update on an angular error; the result is clamped to `±max_steer`.
    pub fn update(&mut self, error: f64, dt: f64, max_steer: f64) -> f64 {
        let g = self.gains;
        self.integral = (self.integral + error * dt).clamp(-g.integral_limit, g.integral_limit);
        let derivative = self.prev_error.map_or(0.0, |p| (error - p) / dt);
        self.prev_error = Some(error);
        (g.kp * error + g.ki * self.integral + g.kd * derivative).clamp(-max_steer, max_steer)
    }

    /// Steering toward the path point `lookahead` meters past `ego_s`.
    pub fn steer(&mut self, ego: &Pose2D, path: &DensePath, ego_s: f64, lookahead: f64, dt: f64, max_steer: f64) -> f64 {
        let error = heading_error(ego, path, ego_s, lookahead);
        self.update(error, dt, max_steer)
    }
}

/// Signed bearing from the ego heading to the lookahead point (left positive).
pub fn heading_error(ego: &Pose2D, path: &DensePath, ego_s: f64, lookahead: f64) -> f64 {
    let target = path.pose_at(ego_s + lookahead);
    let d = target.position() - ego.position();
    if d.norm() < 1e-6 {
        return normalize_angle(target.yaw - ego.yaw);
    }
    ego.bearing_to(target.position())
}

/// Coefficients over the features `[1, v, target, target − v, v·(target − v)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 5]", into = "[f64; 5]")]
pub struct LongitudinalCoeffs(pub [f64; 5]);

impl TryFrom<[f64; 5]> for LongitudinalCoeffs {
    type Error = String;

    fn try_from(c: [f64; 5]) -> Result<Self, String> {
        if c.iter().all(|v| v.is_finite()) {
            Ok(Self(c))
        } else {
            Err("longitudinal coefficients must be finite".into())
        }
    }
}

impl From<LongitudinalCoeffs> for [f64; 5] {
    fn from(c: LongitudinalCoeffs) -> Self {
        c.0
    }
}

impl Default for LongitudinalCoeffs {
    fn default() -> Self {
        Self([0.0, 0.0, 0.0, 1.0, 0.2])
    }
}

pub fn features(v: f64, target: f64) -> [f64; 5] {
    [1.0, v, target, target - v, v * (target - v)]
}

impl LongitudinalCoeffs {
    /// Signed actuation command.
    pub fn command(&self, v: f64, target: f64) -> f64 {
        self.0.iter().zip(features(v, target)).map(|(c, f)| c * f).sum()
    }
}

/// `(throttle, brake)` for the current and target speed.
pub fn longitudinal_control(v: f64, target: f64, coeffs: &LongitudinalCoeffs) -> (f64, f64) {
    let u = coeffs.command(v, target);
    if u > 0.0 {
        (u.clamp(0.0, 1.0), 0.0)
    } else {
        (0.0, (-u).clamp(0.0, 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalSample {
    pub v: f64,
    pub target: f64,
    /// Applied command, throttle minus brake.
    pub u: f64,
}

/// Least-squares fit of the longitudinal coefficients.
///
/// `target` is exactly `v + (target − v)`, so the feature matrix is never full
/// rank. Columns are admitted in the order `target − v`, `v·(target − v)`, `1`,
/// `v`, `target` and skipped when they add no rank; skipped coefficients are 0.
pub fn fit_longitudinal(samples: &[LongitudinalSample]) -> Result<LongitudinalCoeffs, ExpertError> {
    if samples.is_empty() {
        return Err(ExpertError::Config("no samples to fit".into()));
    }
    let n = samples.len();
    let full = DMatrix::from_fn(n, 5, |r, c| features(samples[r].v, samples[r].target)[c]);
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.u));
    let scale = full.amax().max(1.0);
    let tol = 1e-9 * scale * (n as f64).sqrt();
    let mut kept: Vec<usize> = Vec::new();
    for c in [3usize, 4, 0, 1, 2] {
        let mut trial = kept.clone();
        trial.push(c);
        let sub = full.select_columns(&trial);
        if sub.clone().svd(false, false).rank(tol) == trial.len() {
            kept = trial;
        }
    }
    if kept.is_empty() {
        return Err(ExpertError::Config("samples carry no information".into()));
    }
    let sub = full.select_columns(&kept);
    let x = sub
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| ExpertError::Config(format!("least squares failed: {e}")))?;
    let mut coeffs = [0.0; 5];
    for (k, &c) in kept.iter().enumerate() {
        coeffs[c] = x[k];
    }
    LongitudinalCoeffs::try_from(coeffs).map_err(ExpertError::Config)
}
