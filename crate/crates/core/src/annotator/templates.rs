//! Question and answer wording, loaded from a versioned JSON file.

use std::path::Path;

use serde::{Deserialize, Serialize};

const BUILTIN: &str = include_str!("../../templates/carla_v1.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadTemplates {
    pub question: String,
    pub at_junction: String,
    pub not_at_junction: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaTemplate {
    pub question: String,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionTemplates {
    pub ahead: String,
    pub behind: String,
    pub left: String,
    pub right: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatusTemplates {
    pub moving: String,
    pub stopped: String,
    pub parked: String,
    pub crossing: String,
    pub walking: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionTemplates {
    pub question: String,
    pub keep: String,
    pub slow: String,
    pub stay: String,
    pub cross: String,
    pub walk: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningObjectTemplates {
    pub question: String,
    pub follow: String,
    pub stop_for: String,
    #[serde(rename = "yield")]
    pub yield_to: String,
    pub ignore: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningEgoTemplates {
    pub question: String,
    pub accelerate: String,
    pub cruise: String,
    pub brake: String,
    pub stop: String,
    pub because_light: String,
    pub because_stop_sign: String,
    pub because_object: String,
    pub end: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionOnly {
    pub question: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub version: String,
    pub road: RoadTemplates,
    pub traffic_light: QaTemplate,
    pub stop_sign: QaTemplate,
    pub object: QaTemplate,
    pub position: PositionTemplates,
    pub status: StatusTemplates,
    pub prediction: PredictionTemplates,
    pub planning_object: PlanningObjectTemplates,
    pub planning_ego: PlanningEgoTemplates,
    pub behavior: QuestionOnly,
    pub motion: QuestionOnly,
}

impl Default for Templates {
    fn default() -> Self {
        serde_json::from_str(BUILTIN).expect("built-in templates parse")
    }
}

impl Templates {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

/// Replaces each `{name}` with its value. Unknown placeholders are left as is.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}
