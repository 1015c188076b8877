//! Flat-world pinhole camera rig used to place c-tags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scene::geometry::{normalize_angle, Pose2, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CameraName {
    #[serde(rename = "CAM_FRONT")]
    Front,
    #[serde(rename = "CAM_FRONT_LEFT")]
    FrontLeft,
    #[serde(rename = "CAM_FRONT_RIGHT")]
    FrontRight,
    #[serde(rename = "CAM_BACK")]
    Back,
    #[serde(rename = "CAM_BACK_LEFT")]
    BackLeft,
    #[serde(rename = "CAM_BACK_RIGHT")]
    BackRight,
}

impl CameraName {
    pub const ALL: [CameraName; 6] = [
        CameraName::Front,
        CameraName::FrontLeft,
        CameraName::FrontRight,
        CameraName::Back,
        CameraName::BackLeft,
        CameraName::BackRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CameraName::Front => "CAM_FRONT",
            CameraName::FrontLeft => "CAM_FRONT_LEFT",
            CameraName::FrontRight => "CAM_FRONT_RIGHT",
            CameraName::Back => "CAM_BACK",
            CameraName::BackLeft => "CAM_BACK_LEFT",
            CameraName::BackRight => "CAM_BACK_RIGHT",
        }
    }
}

impl fmt::Display for CameraName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CameraName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CameraName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown camera `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub name: CameraName,
    /// Mount yaw relative to the ego heading, counterclockwise.
    pub mount_yaw: f64,
    /// Horizontal field of view.
    pub fov: f64,
    pub width: u32,
    pub height: u32,
    /// Focal length in pixels.
    pub focal: f64,
}

impl Camera {
    fn with_fov(name: CameraName, mount_deg: f64, fov_deg: f64) -> Self {
        let fov = fov_deg.to_radians();
        let width = 1600;
        Self {
            name,
            mount_yaw: mount_deg.to_radians(),
            fov,
            width,
            height: 900,
            focal: (width as f64 / 2.0) / (fov / 2.0).tan(),
        }
    }

    /// Angle of a bearing from the optical axis, positive to the right in the image.
    pub fn image_angle(&self, bearing: f64) -> f64 {
        normalize_angle(self.mount_yaw - bearing)
    }

    pub fn sees(&self, bearing: f64) -> bool {
        self.image_angle(bearing).abs() <= self.fov / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RigError {
    #[error("rig must have exactly 6 cameras, found {0}")]
    CameraCount(usize),
    #[error("camera {0} appears more than once")]
    Duplicate(CameraName),
    #[error("camera {0} has field of view outside (0, π)")]
    Fov(CameraName),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
}

/// Image location of a projected point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub camera: CameraName,
    pub u: f64,
    pub v: f64,
}

impl Default for CameraRig {
    /// Five 70° cameras plus a 110° rear camera, 1600×900 images.
    fn default() -> Self {
        Self {
            cameras: vec![
                Camera::with_fov(CameraName::Front, 0.0, 70.0),
                Camera::with_fov(CameraName::FrontLeft, 55.0, 70.0),
                Camera::with_fov(CameraName::FrontRight, -55.0, 70.0),
                Camera::with_fov(CameraName::Back, 180.0, 110.0),
                Camera::with_fov(CameraName::BackLeft, 110.0, 70.0),
                Camera::with_fov(CameraName::BackRight, -110.0, 70.0),
            ],
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<(), RigError> {
        if self.cameras.len() != 6 {
            return Err(RigError::CameraCount(self.cameras.len()));
        }
        for (i, cam) in self.cameras.iter().enumerate() {
            if self.cameras[..i].iter().any(|c| c.name == cam.name) {
                return Err(RigError::Duplicate(cam.name));
            }
            if !(cam.fov > 0.0 && cam.fov < std::f64::consts::PI) {
                return Err(RigError::Fov(cam.name));
            }
        }
        Ok(())
    }

    pub fn camera(&self, name: CameraName) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.name == name)
    }

    /// First camera in rig order whose field of view contains the bearing.
    pub fn camera_for_bearing(&self, bearing: f64) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.sees(bearing))
    }

    /// Projects a world point seen from `ego` onto the first camera that contains it.
    ///
    /// Flat world: every object sits on the horizon row, so `v` is the image center row.
    pub fn project(&self, point: Vec2<f64>, ego: &Pose2<f64>) -> Option<Projection> {
        let bearing = ego.bearing_to(point);
        let cam = self.camera_for_bearing(bearing)?;
        let u = cam.focal * cam.image_angle(bearing).tan() + cam.width as f64 / 2.0;
        Some(Projection {
            camera: cam.name,
            u,
            v: cam.height as f64 / 2.0,
        })
    }
}

/// Free-function form of [`CameraRig::project`].
pub fn project_to_camera(point: Vec2<f64>, ego: &Pose2<f64>, rig: &CameraRig) -> Option<Projection> {
    rig.project(point, ego)
}
