//! `<cK,CAM,u,v>` object references.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scene::CameraName;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CTag {
    pub index: u32,
    pub camera: CameraName,
    pub u: f64,
    pub v: f64,
}

fn tenth(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl CTag {
    /// Pixel coordinates are kept at the rendered precision so that
    /// parsing a rendered tag gives back the same value.
    pub fn new(index: u32, camera: CameraName, u: f64, v: f64) -> Self {
        Self {
            index,
            camera,
            u: tenth(u),
            v: tenth(v),
        }
    }

    /// Short id used as the key-object key, e.g. `c3`.
    pub fn key(&self) -> String {
        format!("c{}", self.index)
    }
}

impl fmt::Display for CTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<c{},{},{:.1},{:.1}>", self.index, self.camera, self.u, self.v)
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("malformed c-tag {0:?}")]
pub struct CTagParseError(pub String);

impl FromStr for CTag {
    type Err = CTagParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CTagParseError(s.to_string());
        let body = s.trim().strip_prefix("<c").and_then(|b| b.strip_suffix('>')).ok_or_else(err)?;
        let parts: Vec<&str> = body.split(',').collect();
        let [idx, cam, u, v] = parts.as_slice() else {
            return Err(err());
        };
        let u: f64 = u.trim().parse().map_err(|_| err())?;
        let v: f64 = v.trim().parse().map_err(|_| err())?;
        if !u.is_finite() || !v.is_finite() {
            return Err(err());
        }
        Ok(Self {
            index: idx.parse().map_err(|_| err())?,
            camera: cam.trim().parse().map_err(|_| err())?,
            u,
            v,
        })
    }
}

/// Byte spans of every `<c…>` candidate in `text`, parsed or not.
pub fn find_ctags(text: &str) -> Vec<(std::ops::Range<usize>, Result<CTag, CTagParseError>)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(off) = text[from..].find("<c") {
        let start = from + off;
        let digit_next = text[start + 2..].chars().next().is_some_and(|c| c.is_ascii_digit());
        match text[start..].find('>') {
            Some(len) if digit_next => {
                let end = start + len + 1;
                out.push((start..end, text[start..end].parse()));
                from = end;
            }
            _ => from = start + 2,
        }
    }
    out
}
