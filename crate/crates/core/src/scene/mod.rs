//! Geometry, actor and map primitives.

pub mod actor;
pub mod camera;
pub mod geometry;
pub mod lane;
pub mod world;

pub use actor::{ActorId, ActorKind, ActorState, ControlKind, Footprint, LightCycle, LightState, TrafficControl};
pub use camera::{project_to_camera, Camera, CameraName, CameraRig, Projection};
pub use geometry::{normalize_angle, obb_intersects, Obb, Pose2, Vec2};
pub use lane::{Lane, LaneGraph, LaneProjection};
pub use world::WorldState;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}
