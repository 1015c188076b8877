//! QA graph container, topological ordering and structural validation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotator::ctag::find_ctags;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    P1,
    P2,
    P3,
    B,
    M,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::P1, Stage::P2, Stage::P3, Stage::B, Stage::M];

    /// Section name of the stage in the on-disk `QA` map.
    pub fn section(self) -> &'static str {
        match self {
            Stage::P1 => "perception",
            Stage::P2 => "prediction",
            Stage::P3 => "planning",
            Stage::B => "behavior",
            Stage::M => "motion",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::P1 => "P1",
            Stage::P2 => "P2",
            Stage::P3 => "P3",
            Stage::B => "B",
            Stage::M => "M",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s) || st.section() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QANode {
    pub id: String,
    pub stage: Stage,
    #[serde(rename = "Q")]
    pub question: String,
    #[serde(rename = "A")]
    pub answer: String,
    /// Rendered c-tags of the objects the node is about.
    #[serde(default)]
    pub key_objects: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default)]
    pub children: Vec<String>,
}

impl QANode {
    pub fn new(id: impl Into<String>, stage: Stage, question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            stage,
            question: question.into(),
            answer: answer.into(),
            key_objects: Vec::new(),
            parents: Vec::new(),
            children: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyObjectInfo {
    #[serde(rename = "Category")]
    pub category: String,
    #[serde(rename = "Status")]
    pub status: String,
    #[serde(rename = "Visual_description")]
    pub description: String,
    /// `[u_min, v_min, u_max, v_max]` in pixels.
    #[serde(rename = "2d_bbox")]
    pub bbox_2d: [f64; 4],
}

/// One keyframe's QA pairs. `edges` is authoritative; node parent and child
/// lists mirror it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "GraphRepr", from = "GraphRepr")]
pub struct QAGraph {
    pub frame_id: String,
    pub nodes: BTreeMap<String, QANode>,
    pub edges: Vec<(String, String)>,
    pub key_object_infos: BTreeMap<String, KeyObjectInfo>,
}

/// On-disk layout: nodes grouped by stage section, plus the edge list.
#[derive(Serialize, Deserialize)]
struct GraphRepr {
    frame_id: String,
    key_object_infos: BTreeMap<String, KeyObjectInfo>,
    #[serde(rename = "QA")]
    qa: BTreeMap<String, Vec<QANode>>,
    edges: Vec<(String, String)>,
}

impl From<QAGraph> for GraphRepr {
    fn from(g: QAGraph) -> Self {
        let mut qa: BTreeMap<String, Vec<QANode>> = Stage::ALL.iter().map(|s| (s.section().to_string(), Vec::new())).collect();
        for node in g.nodes.into_values() {
            qa.get_mut(node.stage.section()).expect("all sections present").push(node);
        }
        Self {
            frame_id: g.frame_id,
            key_object_infos: g.key_object_infos,
            qa,
            edges: g.edges,
        }
    }
}

impl From<GraphRepr> for QAGraph {
    fn from(r: GraphRepr) -> Self {
        // Section names are informational; each node carries its own stage.
        Self {
            frame_id: r.frame_id,
            nodes: r.qa.into_values().flatten().map(|n| (n.id.clone(), n)).collect(),
            edges: r.edges,
            key_object_infos: r.key_object_infos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("duplicate node {0}")]
    DuplicateNode(String),
    #[error("edge {0} -> {1} references a missing node")]
    MissingNode(String, String),
    #[error("graph has a cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("graph {frame} is invalid: {violations:?}")]
    Invalid { frame: String, violations: Vec<String> },
}

impl QAGraph {
    pub fn new(frame_id: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.into(),
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            key_object_infos: BTreeMap::new(),
        }
    }

    pub fn add_node(&mut self, node: QANode) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    /// Adds an edge and mirrors it into the endpoint lists. Duplicates are ignored.
    pub fn add_edge(&mut self, parent: &str, child: &str) -> Result<(), GraphError> {
        if !self.nodes.contains_key(parent) || !self.nodes.contains_key(child) {
            return Err(GraphError::MissingNode(parent.into(), child.into()));
        }
        if self.edges.iter().any(|(p, c)| p == parent && c == child) {
            return Ok(());
        }
        self.edges.push((parent.to_string(), child.to_string()));
        self.nodes.get_mut(parent).unwrap().children.push(child.to_string());
        self.nodes.get_mut(child).unwrap().parents.push(parent.to_string());
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&QANode> {
        self.nodes.get(id)
    }

    pub fn nodes_in(&self, stage: Stage) -> impl Iterator<Item = &QANode> {
        self.nodes.values().filter(move |n| n.stage == stage)
    }

    /// Parent ids of `id` taken from the edge list.
    pub fn parents_of(&self, id: &str) -> Vec<&str> {
        self.edges.iter().filter(|(_, c)| c == id).map(|(p, _)| p.as_str()).collect()
    }

    /// Kahn's algorithm, always taking the smallest ready (stage, id).
    pub fn topological_order(&self) -> Result<Vec<String>, GraphError> {
        let mut indegree: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (p, c) in &self.edges {
            if !self.nodes.contains_key(p) || !self.nodes.contains_key(c) {
                return Err(GraphError::MissingNode(p.clone(), c.clone()));
            }
            *indegree.get_mut(c.as_str()).unwrap() += 1;
            children.entry(p.as_str()).or_default().push(c.as_str());
        }
        let key = |id: &str| (self.nodes[id].stage, id.to_string());
        let mut ready: BinaryHeap<Reverse<(Stage, String)>> =
            indegree.iter().filter(|(_, &d)| d == 0).map(|(id, _)| Reverse(key(id))).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse((_, id))) = ready.pop() {
            for &c in children.get(id.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(c).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(key(c)));
                }
            }
            order.push(id);
        }
        if order.len() < self.nodes.len() {
            let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            let stuck = self.nodes.keys().filter(|k| !done.contains(k.as_str())).cloned().collect();
            return Err(GraphError::Cycle(stuck));
        }
        Ok(order)
    }

    /// Validation gate for consumers: Ok iff [`validate_graph`] finds nothing.
    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let v = validate_graph(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Invalid {
                frame: self.frame_id.clone(),
                violations: v.iter().map(ToString::to_string).collect(),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Cycle { nodes: Vec<String> },
    DanglingEdge { parent: String, child: String },
    StageOrder { parent: String, child: String },
    MissingStage { stage: Stage },
    ExtraStage { stage: Stage, count: usize },
    Mirror { node: String, detail: String },
    IdMismatch { key: String, id: String },
    BadCTag { node: String, text: String },
    UnknownCTag { node: String, tag: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { nodes } => write!(f, "cycle through {}", nodes.join(" -> ")),
            Violation::DanglingEdge { parent, child } => write!(f, "edge {parent} -> {child} has a missing endpoint"),
            Violation::StageOrder { parent, child } => write!(f, "edge {parent} -> {child} goes to an earlier stage"),
            Violation::MissingStage { stage } => write!(f, "no {stage} node"),
            Violation::ExtraStage { stage, count } => write!(f, "{count} {stage} nodes, expected 1"),
            Violation::Mirror { node, detail } => write!(f, "node {node}: {detail}"),
            Violation::IdMismatch { key, id } => write!(f, "node stored under {key} has id {id}"),
            Violation::BadCTag { node, text } => write!(f, "node {node}: unparseable c-tag {text}"),
            Violation::UnknownCTag { node, tag } => write!(f, "node {node}: c-tag {tag} not in key_object_infos"),
        }
    }
}

/// Every back edge found by a depth-first search, as the cycle it closes.
fn cycles(g: &QAGraph) -> Vec<Vec<String>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (p, c) in &g.edges {
        if g.nodes.contains_key(p) && g.nodes.contains_key(c) {
            adj.entry(p.as_str()).or_default().push(c.as_str());
        }
    }
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark: BTreeMap<&str, Mark> = g.nodes.keys().map(|k| (k.as_str(), Mark::New)).collect();
    let mut found = Vec::new();
    for root in g.nodes.keys() {
        if mark[root.as_str()] != Mark::New {
            continue;
        }
        // Explicit stack of (node, next child index).
        let mut stack: Vec<(&str, usize)> = vec![(root.as_str(), 0)];
        mark.insert(root.as_str(), Mark::Open);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let kids = adj.get(node).map(Vec::as_slice).unwrap_or(&[]);
            if *next < kids.len() {
                let k = kids[*next];
                *next += 1;
                match mark[k] {
                    Mark::New => {
                        mark.insert(k, Mark::Open);
                        stack.push((k, 0));
                    }
                    Mark::Open => {
                        let from = stack.iter().position(|(n, _)| *n == k).unwrap();
                        found.push(stack[from..].iter().map(|(n, _)| n.to_string()).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    found
}

pub fn validate_graph(g: &QAGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    for (key, node) in &g.nodes {
        if key != &node.id {
            out.push(Violation::IdMismatch {
                key: key.clone(),
                id: node.id.clone(),
            });
        }
    }
    let mut edge_set = BTreeSet::new();
    for (p, c) in &g.edges {
        match (g.nodes.get(p), g.nodes.get(c)) {
            (Some(pn), Some(cn)) => {
                if pn.stage > cn.stage {
                    out.push(Violation::StageOrder {
                        parent: p.clone(),
                        child: c.clone(),
                    });
                }
                edge_set.insert((p.as_str(), c.as_str()));
            }
            _ => out.push(Violation::DanglingEdge {
                parent: p.clone(),
                child: c.clone(),
            }),
        }
    }
    for nodes in cycles(g) {
        out.push(Violation::Cycle { nodes });
    }
    for (id, node) in &g.nodes {
        let parents: BTreeSet<&str> = node.parents.iter().map(String::as_str).collect();
        let children: BTreeSet<&str> = node.children.iter().map(String::as_str).collect();
        let want_parents: BTreeSet<&str> = edge_set.iter().filter(|(_, c)| c == id).map(|(p, _)| *p).collect();
        let want_children: BTreeSet<&str> = edge_set.iter().filter(|(p, _)| p == id).map(|(_, c)| *c).collect();
        if parents != want_parents || children != want_children {
            out.push(Violation::Mirror {
                node: id.clone(),
                detail: "parent/child lists disagree with the edge list".into(),
            });
        }
    }
    for stage in [Stage::B, Stage::M] {
        match g.nodes_in(stage).count() {
            0 => out.push(Violation::MissingStage { stage }),
            1 => {}
            count => out.push(Violation::ExtraStage { stage, count }),
        }
    }
    for node in g.nodes.values() {
        let texts = [node.question.as_str(), node.answer.as_str()];
        let spans = texts.iter().flat_map(|t| find_ctags(t).into_iter().map(move |(r, tag)| (t[r].to_string(), tag)));
        let key_spans = node.key_objects.iter().map(|k| (k.clone(), k.parse()));
        for (text, tag) in spans.chain(key_spans) {
            match tag {
                Ok(tag) => {
                    let rendered = tag.to_string();
                    if !g.key_object_infos.contains_key(&rendered) {
                        out.push(Violation::UnknownCTag {
                            node: node.id.clone(),
                            tag: rendered,
                        });
                    }
                }
                Err(_) => out.push(Violation::BadCTag {
                    node: node.id.clone(),
                    text,
                }),
            }
        }
    }
    out
}
