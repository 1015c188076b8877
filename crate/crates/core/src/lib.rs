//! Deterministic driving micro-simulator and graph VQA toolkit.
//!
//! Geometry and dynamics kernels are generic over the scalar type; the
//! aliases below fix them to `f64` for the rest of the crate.

pub mod annotator;
pub mod expert;
pub mod fixtures;
pub mod labels;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod provenance;
pub mod runtime;
pub mod scene;
pub mod sim;

pub type Vec2D = scene::Vec2<f64>;
pub type Pose2D = scene::Pose2<f64>;
pub type OrientedBox = scene::Obb<f64>;
pub type MotionLabel = labels::Trajectory<f64>;
