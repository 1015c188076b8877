//! Rule-based graph VQA generation from privileged rollout state.

pub mod ctag;
pub mod generate;
pub mod graph;
pub mod templates;

pub use ctag::{find_ctags, CTag, CTagParseError};
pub use generate::{
    annotate_log, extract_keyframes, frame_id, generate_qa, make_ctags, scene_futures, AnnotatorConfig, CTagSet, DecisionInfo,
    FrameAnnotation, FrameInput, QaFile, SkippedFrame, KEYFRAME_SPACING, QA_FORMAT, QA_VERSION,
};
pub use graph::{validate_graph, GraphError, KeyObjectInfo, QAGraph, QANode, Stage, Violation};
pub use templates::Templates;

use crate::labels::LabelError;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("missing {0} label")]
    MissingLabel(&'static str),
    #[error("rollout has no records")]
    EmptyLog,
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("annotator config: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}
