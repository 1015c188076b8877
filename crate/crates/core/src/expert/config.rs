use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expert::control::{LongitudinalCoeffs, PidGains};
use crate::expert::idm::IdmParams;
use crate::expert::ExpertError;
use crate::provenance::config_hash;
use crate::sim::BicycleParams;

/// Planner configuration file. Every field has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub idm: IdmParams,
    pub pid: PidGains,
    pub longitudinal: LongitudinalCoeffs,
    /// Dense path spacing (m).
    pub path_spacing: f64,
    /// Step used to integrate IDM acceleration into a target speed (s).
    pub dt_ctrl: f64,
    /// Lateral lookahead is `max(lookahead_min, lookahead_gain · v)`.
    pub lookahead_min: f64,
    pub lookahead_gain: f64,
    pub bicycle: BicycleParams<f64>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            pid: PidGains::default(),
            longitudinal: LongitudinalCoeffs::default(),
            path_spacing: 1.0,
            dt_ctrl: 0.05,
            lookahead_min: 2.5,
            lookahead_gain: 1.0,
            bicycle: BicycleParams::default(),
        }
    }
}

impl PlannerConfig {
    pub fn from_json_str(s: &str) -> Result<Self, ExpertError> {
        let c: Self = serde_json::from_str(s).map_err(|e| ExpertError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ExpertError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExpertError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ExpertError> {
        self.idm.validate().map_err(ExpertError::Config)?;
        self.bicycle.validate().map_err(ExpertError::Config)?;
        let g = &self.pid;
        if ![g.kp, g.ki, g.kd, g.integral_limit].iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(ExpertError::Config("PID gains must be finite and non-negative".into()));
        }
        if !self.longitudinal.0.iter().all(|v| v.is_finite()) {
            return Err(ExpertError::Config("longitudinal coefficients must be finite".into()));
        }
        for (name, v) in [
            ("path_spacing", self.path_spacing),
            ("dt_ctrl", self.dt_ctrl),
            ("lookahead_min", self.lookahead_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ExpertError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lookahead_gain >= 0.0 && self.lookahead_gain.is_finite()) {
            return Err(ExpertError::Config("lookahead_gain must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lookahead(&self, v: f64) -> f64 {
        self.lookahead_min.max(self.lookahead_gain * v)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}
