use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use super::{BinsFile, CoeffsFile, LabelFile, TokenFile, BINS_FORMAT, COEFFS_FORMAT, LABELS_FORMAT, TOKENS_FORMAT};
use crate::annotator::{validate_graph, QaFile, QA_FORMAT};
use crate::labels::{behavior_label, interval_deltas, TokenBins, EOT, SOT};
use crate::metrics::{MetricsReport, REPORT_FORMAT};
use crate::provenance::{sha256_hex, Provenance, TOOL_NAME};
use crate::runtime::{PredFile, PRED_FORMAT};
use crate::scene::LaneGraph;
use crate::sim::{RolloutLog, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Rollout,
    Scenario,
    LaneGraph,
    Qa,
    Predictions,
    Report,
    Labels,
    Bins,
    Tokens,
    Coeffs,
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileReport {
    pub path: PathBuf,
    pub kind: Option<FileKind>,
    /// Set when the file could not be read at all.
    pub unreadable: Option<String>,
    pub violations: Vec<String>,
    /// Informational, e.g. a referenced input that is not present.
    pub notes: Vec<String>,
}

impl FileReport {
    pub fn is_clean(&self) -> bool {
        self.unreadable.is_none() && self.violations.is_empty()
    }
}

/// 0 when every file is clean, 2 when one could not be read, 1 otherwise.
pub fn exit_code(reports: &[FileReport]) -> i32 {
    if reports.iter().any(|r| r.unreadable.is_some()) {
        2
    } else if reports.iter().all(FileReport::is_clean) {
        0
    } else {
        1
    }
}

pub fn validate_files(paths: &[PathBuf]) -> (Vec<FileReport>, i32) {
    let reports: Vec<FileReport> = paths.iter().map(|p| validate_file(p)).collect();
    let code = exit_code(&reports);
    (reports, code)
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, out: &mut Vec<String>) -> Option<T> {
    match serde_json::from_str(text) {
        Ok(v) => Some(v),
        Err(e) => {
            out.push(format!("parse error at line {} column {}: {e}", e.line(), e.column()));
            None
        }
    }
}

/// Recomputes the digest of every input the artifact names that is present
/// next to it.
fn check_chain(path: &Path, prov: &Provenance, report: &mut FileReport) {
    if prov.tool != TOOL_NAME {
        report.violations.push(format!("provenance.tool is {:?}", prov.tool));
    }
    if prov.config_hash.is_empty() {
        report.violations.push("provenance.config_hash is empty".into());
    }
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    for input in &prov.inputs {
        let p = dir.join(&input.name);
        match std::fs::read(&p) {
            Ok(bytes) => {
                let sha = sha256_hex(&bytes);
                if sha != input.sha256 {
                    report
                        .violations
                        .push(format!("input {} changed: recorded sha256 {}, found {sha}", input.name, input.sha256));
                }
            }
            Err(_) => report.notes.push(format!("input {} not present; hash not checked", input.name)),
        }
    }
}

fn check_rollout(path: &Path, report: &mut FileReport) {
    report.kind = Some(FileKind::Rollout);
    match RolloutLog::read(path) {
        Ok(log) => {
            check_chain(path, &log.header.provenance, report);
            if log.records.is_empty() {
                report.violations.push("log has no tick records".into());
            }
        }
        Err(e) => report.violations.push(e.to_string()),
    }
}

fn check_qa(text: &str, path: &Path, report: &mut FileReport) {
    let Some(qa) = parse::<QaFile>(text, &mut report.violations) else { return };
    check_chain(path, &qa.provenance, report);
    for f in &qa.frames {
        for v in validate_graph(&f.graph) {
            report.violations.push(format!("{}: {v}", f.graph.frame_id));
        }
    }
}

fn check_labels(text: &str, path: &Path, report: &mut FileReport) {
    let Some(file) = parse::<LabelFile>(text, &mut report.violations) else { return };
    check_chain(path, &file.provenance, report);
    if let Err(e) = file.thresholds.validate() {
        report.violations.push(e.to_string());
        return;
    }
    for e in &file.entries {
        if interval_deltas(&e.motion) != e.deltas {
            report.violations.push(format!("{}: deltas do not match offsets", e.frame_id));
        }
        if behavior_label(&e.motion, &file.thresholds) != e.behavior {
            report.violations.push(format!("{}: behavior label does not match motion", e.frame_id));
        }
    }
}

fn check_tokens(text: &str, path: &Path, report: &mut FileReport) {
    let Some(file) = parse::<TokenFile>(text, &mut report.violations) else { return };
    check_chain(path, &file.provenance, report);
    for e in &file.entries {
        let t = &e.tokens;
        let framed = t.len() >= 4 && t[0] == SOT && t[t.len() - 1] == EOT && t.len() % 2 == 0;
        if !framed || t[1..t.len() - 1].iter().any(|&id| id >= SOT) {
            report.violations.push(format!("{}: malformed token sequence", e.frame_id));
        }
    }
}

/// Checks one file; the kind is inferred from its extension and contents.
pub fn validate_file(path: &Path) -> FileReport {
    let mut report = FileReport {
        path: path.to_path_buf(),
        kind: None,
        unreadable: None,
        violations: Vec::new(),
        notes: Vec::new(),
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            report.unreadable = Some(e.to_string());
            return report;
        }
    };
    if path.extension().is_some_and(|e| e == "jsonl") {
        check_rollout(path, &mut report);
        return report;
    }
    let Some(value) = parse::<Value>(&text, &mut report.violations) else { return report };
    let format = value.get("format").and_then(Value::as_str).unwrap_or("");
    match format {
        QA_FORMAT => {
            report.kind = Some(FileKind::Qa);
            check_qa(&text, path, &mut report);
        }
        PRED_FORMAT => {
            report.kind = Some(FileKind::Predictions);
            if let Some(p) = parse::<PredFile>(&text, &mut report.violations) {
                check_chain(path, &p.provenance, &mut report);
                for f in &p.frames {
                    for id in f.result.failed.keys().filter(|id| f.result.answers.contains_key(*id)) {
                        report.violations.push(format!("{}: node {id} both answered and failed", f.frame_id));
                    }
                }
            }
        }
        REPORT_FORMAT => {
            report.kind = Some(FileKind::Report);
            if let Some(r) = parse::<MetricsReport>(&text, &mut report.violations) {
                check_chain(path, &r.provenance, &mut report);
                report.violations.extend(r.violations());
            }
        }
        LABELS_FORMAT => {
            report.kind = Some(FileKind::Labels);
            check_labels(&text, path, &mut report);
        }
        BINS_FORMAT => {
            report.kind = Some(FileKind::Bins);
            if let Some(b) = parse::<BinsFile>(&text, &mut report.violations) {
                check_chain(path, &b.provenance, &mut report);
                if let Err(e) = b.bins.validate() {
                    report.violations.push(e.to_string());
                }
            }
        }
        TOKENS_FORMAT => {
            report.kind = Some(FileKind::Tokens);
            check_tokens(&text, path, &mut report);
        }
        COEFFS_FORMAT => {
            report.kind = Some(FileKind::Coeffs);
            if let Some(c) = parse::<CoeffsFile>(&text, &mut report.violations) {
                check_chain(path, &c.provenance, &mut report);
            }
        }
        "" if value.get("initial").is_some() => {
            report.kind = Some(FileKind::Scenario);
            if let Err(e) = Scenario::from_json_str(&text) {
                report.violations.push(e.to_string());
            }
        }
        "" if value.get("lanes").is_some() => {
            report.kind = Some(FileKind::LaneGraph);
            if let Err(e) = LaneGraph::from_json_str(&text) {
                report.violations.push(e.to_string());
            }
        }
        "" if value.get("x").is_some() && value.get("sot").is_some() => {
            report.kind = Some(FileKind::Bins);
            if let Some(b) = parse::<TokenBins>(&text, &mut report.violations) {
                if let Err(e) = b.validate() {
                    report.violations.push(e.to_string());
                }
            }
        }
        other => report.violations.push(format!("unrecognized file (format {other:?})")),
    }
    report
}
