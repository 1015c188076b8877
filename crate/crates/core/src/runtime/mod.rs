//! Executes QA graphs stage by stage against an answerer, passing parent QAs
//! as context.

pub mod answerer;
pub mod external;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotator::{validate_graph, QAGraph, Stage, Violation};
use crate::provenance::Provenance;

pub use answerer::{request_id, AnswerError, AnswerRequest, Answerer, EchoAnswerer, OracleAnswerer};
pub use external::{parse_reply, ExecAnswerer, ExternalConfig, HttpAnswerer, Reply};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    None,
    Chain,
    Graph,
    Gt,
}

impl ContextPolicy {
    pub const ALL: [ContextPolicy; 4] = [ContextPolicy::None, ContextPolicy::Chain, ContextPolicy::Graph, ContextPolicy::Gt];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextPolicy::None => "none",
            ContextPolicy::Chain => "chain",
            ContextPolicy::Graph => "graph",
            ContextPolicy::Gt => "gt",
        }
    }
}

impl fmt::Display for ContextPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ContextPolicy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown context policy {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RuntimeError {
    #[error("graph {frame} rejected: {violations:?}")]
    InvalidGraph { frame: String, violations: Vec<String> },
    #[error("node {node} scheduled before its parent {parent} was answered")]
    UnansweredParent { node: String, parent: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("bad subgraph filter: {0}")]
    Filter(String),
}

/// Parents of `node` that feed its context under `policy`, in execution order.
fn context_parents<'g>(node: &str, graph: &'g QAGraph, policy: ContextPolicy, rank: &BTreeMap<&str, usize>) -> Vec<&'g str> {
    let Some(n) = graph.node(node) else { return Vec::new() };
    let mut parents: Vec<&str> = graph.parents_of(node);
    if policy == ContextPolicy::None {
        return Vec::new();
    }
    if policy == ContextPolicy::Chain && n.stage == Stage::B {
        parents.retain(|p| graph.node(p).is_some_and(|pn| pn.stage == Stage::P3));
    }
    parents.sort_by_key(|p| (rank.get(p).copied().unwrap_or(usize::MAX), p.to_string()));
    parents.dedup();
    parents
}

fn execution_rank(graph: &QAGraph) -> BTreeMap<&str, usize> {
    let order = graph.topological_order().unwrap_or_else(|_| graph.nodes.keys().cloned().collect());
    order
        .iter()
        .enumerate()
        .filter_map(|(i, id)| graph.nodes.get_key_value(id).map(|(k, _)| (k.as_str(), i)))
        .collect()
}

fn render_context(items: &[(&str, &str)]) -> String {
    if items.is_empty() {
        return String::new();
    }
    let body: Vec<String> = items.iter().map(|(q, a)| format!("Q: {q} A: {a}")).collect();
    format!("Context: {}", body.join(" "))
}

/// Context string for `node`. `answers` holds predictions; it is not read
/// under the `gt` policy.
pub fn assemble_context(
    node: &str,
    graph: &QAGraph,
    answers: &BTreeMap<String, String>,
    policy: ContextPolicy,
) -> Result<String, RuntimeError> {
    if !graph.nodes.contains_key(node) {
        return Err(RuntimeError::UnknownNode(node.to_string()));
    }
    let rank = execution_rank(graph);
    assemble_with_rank(node, graph, answers, policy, &rank)
}

fn assemble_with_rank(
    node: &str,
    graph: &QAGraph,
    answers: &BTreeMap<String, String>,
    policy: ContextPolicy,
    rank: &BTreeMap<&str, usize>,
) -> Result<String, RuntimeError> {
    let mut items = Vec::new();
    for p in context_parents(node, graph, policy, rank) {
        let pn = &graph.nodes[p];
        let a = if policy == ContextPolicy::Gt {
            pn.answer.as_str()
        } else {
            answers.get(p).map(String::as_str).ok_or_else(|| RuntimeError::UnansweredParent {
                node: node.to_string(),
                parent: p.to_string(),
            })?
        };
        items.push((pn.question.as_str(), a));
    }
    Ok(render_context(&items))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub answers: BTreeMap<String, String>,
    /// Nodes without an answer and why.
    pub failed: BTreeMap<String, String>,
    /// Node ids in the order they were resolved.
    pub trace: Vec<String>,
}

fn structural(v: &Violation) -> bool {
    !matches!(v, Violation::MissingStage { .. } | Violation::ExtraStage { .. } | Violation::BadCTag { .. } | Violation::UnknownCTag { .. })
}

/// Refuses graphs that cannot be scheduled: cycles, dangling edges, stage
/// order and mirror violations. Missing B/M nodes are allowed so that
/// filtered subgraphs can run.
pub fn check_runnable(graph: &QAGraph) -> Result<(), RuntimeError> {
    let bad: Vec<String> = validate_graph(graph).iter().filter(|v| structural(v)).map(ToString::to_string).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(RuntimeError::InvalidGraph {
            frame: graph.frame_id.clone(),
            violations: bad,
        })
    }
}

/// Answers every node, P1 through M. Within a stage, nodes whose parents are
/// resolved go out together as one batch. A failed node fails all of its
/// descendants; unrelated nodes continue.
pub fn run_graph(graph: &QAGraph, answerer: &dyn Answerer, policy: ContextPolicy) -> Result<RunResult, RuntimeError> {
    check_runnable(graph)?;
    let rank = execution_rank(graph);
    let mut result = RunResult::default();
    let mut done: BTreeSet<String> = BTreeSet::new();
    for stage in Stage::ALL {
        loop {
            let ready: Vec<&str> = graph
                .nodes_in(stage)
                .map(|n| n.id.as_str())
                .filter(|id| !done.contains(*id))
                .filter(|id| graph.parents_of(id).iter().all(|p| done.contains(*p)))
                .collect();
            if ready.is_empty() {
                break;
            }
            let mut batch = Vec::new();
            let mut batch_ids = Vec::new();
            for id in ready {
                if let Some(p) = graph.parents_of(id).into_iter().find(|p| result.failed.contains_key(*p)) {
                    result.failed.insert(id.to_string(), format!("parent {p} failed"));
                    result.trace.push(id.to_string());
                    done.insert(id.to_string());
                    continue;
                }
                let context = assemble_with_rank(id, graph, &result.answers, policy, &rank)?;
                batch.push(AnswerRequest {
                    id: request_id(&graph.frame_id, id),
                    question: graph.nodes[id].question.clone(),
                    context,
                    frame: graph.frame_id.clone(),
                });
                batch_ids.push(id);
            }
            if batch.is_empty() {
                continue;
            }
            let replies = answerer.answer_batch(&batch);
            for (id, reply) in batch_ids.into_iter().zip(replies) {
                match reply {
                    Ok(a) => {
                        result.answers.insert(id.to_string(), a);
                    }
                    Err(e) => {
                        log::warn!("{}: node {id} failed: {e}", graph.frame_id);
                        result.failed.insert(id.to_string(), e.to_string());
                    }
                }
                result.trace.push(id.to_string());
                done.insert(id.to_string());
            }
        }
    }
    Ok(result)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub frame: String,
    pub node: String,
    /// Question followed by the ground-truth context, if any.
    pub input: String,
    pub target: String,
}

/// One sample per node, with ground-truth parent QAs as context.
pub fn teacher_forcing_pairs(graph: &QAGraph) -> Vec<TrainingPair> {
    let rank = execution_rank(graph);
    let empty = BTreeMap::new();
    let mut ids: Vec<&String> = graph.nodes.keys().collect();
    ids.sort_by_key(|id| (rank.get(id.as_str()).copied().unwrap_or(usize::MAX), id.to_string()));
    ids.into_iter()
        .map(|id| {
            let node = &graph.nodes[id];
            let ctx = assemble_with_rank(id, graph, &empty, ContextPolicy::Gt, &rank).expect("gt context never waits on answers");
            let input = if ctx.is_empty() {
                node.question.clone()
            } else {
                format!("{} {ctx}", node.question)
            };
            TrainingPair {
                frame: graph.frame_id.clone(),
                node: id.clone(),
                input,
                target: node.answer.clone(),
            }
        })
        .collect()
}

/// Node selection for running part of a graph.
///
/// Comma-separated terms; a node is kept if any term matches. A term is a
/// stage name (`P1`, `planning`, ...) or a node id pattern with `*` wildcards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphFilter {
    stages: Vec<Stage>,
    patterns: Vec<String>,
}

fn glob_match(pattern: &str, text: &str) -> bool {
    let parts: Vec<&str> = pattern.split('*').collect();
    if parts.len() == 1 {
        return pattern == text;
    }
    let (first, last) = (parts[0], parts[parts.len() - 1]);
    if !text.starts_with(first) || !text[first.len()..].ends_with(last) {
        return false;
    }
    let mut rest = &text[first.len()..text.len() - last.len()];
    for mid in &parts[1..parts.len() - 1] {
        match rest.find(mid) {
            Some(i) => rest = &rest[i + mid.len()..],
            None => return false,
        }
    }
    true
}

impl SubgraphFilter {
    pub fn matches(&self, id: &str, stage: Stage) -> bool {
        self.stages.contains(&stage) || self.patterns.iter().any(|p| glob_match(p, id))
    }

    /// Induced subgraph on the kept nodes.
    pub fn apply(&self, graph: &QAGraph) -> QAGraph {
        let mut out = QAGraph::new(graph.frame_id.clone());
        out.key_object_infos = graph.key_object_infos.clone();
        for n in graph.nodes.values().filter(|n| self.matches(&n.id, n.stage)) {
            let mut n = n.clone();
            n.parents.clear();
            n.children.clear();
            out.add_node(n).expect("ids are unique in the source graph");
        }
        for (p, c) in &graph.edges {
            if out.nodes.contains_key(p) && out.nodes.contains_key(c) {
                out.add_edge(p, c).expect("both endpoints kept");
            }
        }
        out
    }
}

impl FromStr for SubgraphFilter {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, RuntimeError> {
        let mut f = SubgraphFilter {
            stages: Vec::new(),
            patterns: Vec::new(),
        };
        for term in s.split(',').map(str::trim) {
            if term.is_empty() {
                return Err(RuntimeError::Filter(format!("empty term in {s:?}")));
            }
            match term.parse::<Stage>() {
                Ok(st) => f.stages.push(st),
                Err(_) => f.patterns.push(term.to_string()),
            }
        }
        Ok(f)
    }
}

pub const PRED_FORMAT: &str = "driveforge.pred";
pub const PRED_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub frame_id: String,
    #[serde(flatten)]
    pub result: RunResult,
}

/// Predictions for every frame of one QA file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredFile {
    pub format: String,
    pub version: u32,
    pub provenance: Provenance,
    pub scenario: String,
    pub answerer: String,
    pub policy: ContextPolicy,
    pub frames: Vec<FramePrediction>,
}

impl PredFile {
    pub fn new(provenance: Provenance, scenario: &str, answerer: &str, policy: ContextPolicy) -> Self {
        Self {
            format: PRED_FORMAT.into(),
            version: PRED_VERSION,
            provenance,
            scenario: scenario.into(),
            answerer: answerer.into(),
            policy,
            frames: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictions serialize") + "\n"
    }

    pub fn from_json_str(text: &str) -> Result<Self, String> {
        let f: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if f.format != PRED_FORMAT || f.version != PRED_VERSION {
            return Err(format!("unsupported prediction format {} v{}", f.format, f.version));
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn frame(&self, id: &str) -> Option<&FramePrediction> {
        self.frames.iter().find(|f| f.frame_id == id)
    }
}

#[cfg(test)]
mod tests;
