//! Rollout trace persisted as JSON lines: one header line, then one line per tick.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expert::{DecisionLabel, ExpertDecision, Proposal};
use crate::provenance::Provenance;
use crate::scene::{LaneGraph, WorldState};
use crate::sim::{SimError, VehicleControls};

pub const ROLLOUT_FORMAT: &str = "driveforge.rollout";
pub const ROLLOUT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub tick_rate: f64,
    pub annotation_fps: f64,
    pub lane_graph: LaneGraph,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub world: WorldState,
    pub controls: VehicleControls,
    pub decision: DecisionLabel,
    pub proposal: Proposal,
    pub target_speed: f64,
    pub leading: Option<String>,
}

impl TickRecord {
    pub fn new(tick: u64, world: WorldState, d: &ExpertDecision) -> Self {
        Self {
            tick,
            time: world.time,
            world,
            controls: d.controls,
            decision: d.decision_label,
            proposal: d.proposal,
            target_speed: d.target_speed,
            leading: d.leading_entity.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(Box<LogHeader>),
    Tick(Box<TickRecord>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutLog {
    pub header: LogHeader,
    pub records: Vec<TickRecord>,
}

impl RolloutLog {
    pub fn dt(&self) -> f64 {
        1.0 / self.header.tick_rate
    }

    /// Ticks between consecutive annotation samples.
    pub fn annotation_stride(&self) -> usize {
        (self.header.tick_rate / self.header.annotation_fps).round().max(1.0) as usize
    }

    /// Record indices of the annotation stream.
    pub fn annotation_samples(&self) -> Vec<usize> {
        (0..self.records.len()).step_by(self.annotation_stride()).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Line::Header(Box::new(self.header.clone()))).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Tick(Box::new(r.clone()))).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        let mut f = std::fs::File::create(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        f.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, SimError> {
        let mut header = None;
        let mut records: Vec<TickRecord> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| SimError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| SimError::LogParse {
                line: line_no,
                message: e.to_string(),
            })?;
            match parsed {
                Line::Header(h) if header.is_none() && line_no == 1 => header = Some(*h),
                Line::Header(_) => {
                    return Err(SimError::LogParse {
                        line: line_no,
                        message: "unexpected header".into(),
                    })
                }
                Line::Tick(r) => {
                    if header.is_none() {
                        return Err(SimError::LogParse {
                            line: line_no,
                            message: "tick before header".into(),
                        });
                    }
                    if let Some(prev) = records.last() {
                        if r.tick != prev.tick + 1 || r.time <= prev.time {
                            return Err(SimError::LogParse {
                                line: line_no,
                                message: "ticks must be consecutive with increasing time".into(),
                            });
                        }
                    }
                    records.push(*r);
                }
            }
        }
        let header = header.ok_or(SimError::LogParse {
            line: 1,
            message: "missing header".into(),
        })?;
        if header.format != ROLLOUT_FORMAT || header.version != ROLLOUT_VERSION {
            return Err(SimError::LogParse {
                line: 1,
                message: format!("unsupported log format {} v{}", header.format, header.version),
            });
        }
        Ok(Self { header, records })
    }

    pub fn read(path: &Path) -> Result<Self, SimError> {
        let f = std::fs::File::open(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}
