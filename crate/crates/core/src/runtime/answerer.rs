//! Answerer interface and the in-process implementations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotator::QAGraph;

/// One question sent to an answerer. `id` is `frame/node`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub id: String,
    pub question: String,
    pub context: String,
    pub frame: String,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error("no reply within {0:.1} s")]
    Timeout(f64),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("answerer reported: {0}")]
    Remote(String),
    #[error("no ground truth for {0}")]
    Unknown(String),
}

pub trait Answerer: Send + Sync {
    fn answer(&self, req: &AnswerRequest) -> Result<String, AnswerError>;

    /// Answers independent requests; results line up with `reqs`.
    fn answer_batch(&self, reqs: &[AnswerRequest]) -> Vec<Result<String, AnswerError>> {
        reqs.iter().map(|r| self.answer(r)).collect()
    }

    fn name(&self) -> String;
}

pub fn request_id(frame: &str, node: &str) -> String {
    format!("{frame}/{node}")
}

/// Returns the ground-truth answer of each node.
#[derive(Clone, Debug, Default)]
pub struct OracleAnswerer {
    answers: HashMap<String, String>,
}

impl OracleAnswerer {
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a QAGraph>) -> Self {
        let answers = graphs
            .into_iter()
            .flat_map(|g| g.nodes.values().map(move |n| (request_id(&g.frame_id, &n.id), n.answer.clone())))
            .collect();
        Self { answers }
    }
}

impl Answerer for OracleAnswerer {
    fn answer(&self, req: &AnswerRequest) -> Result<String, AnswerError> {
        self.answers.get(&req.id).cloned().ok_or_else(|| AnswerError::Unknown(req.id.clone()))
    }

    fn name(&self) -> String {
        "oracle".into()
    }
}

/// Always answers with the empty string.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoAnswerer;

impl Answerer for EchoAnswerer {
    fn answer(&self, _: &AnswerRequest) -> Result<String, AnswerError> {
        Ok(String::new())
    }

    fn name(&self) -> String {
        "echo".into()
    }
}
