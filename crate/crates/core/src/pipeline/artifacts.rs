use std::path::{Component, Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::provenance::{sha256_hex, InputDigest, TOOL_VERSION};

/// Contents of `{artifact}.meta.json`. Kept out of the artifact so reruns
/// produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub stage: String,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub written_at: f64,
    pub sha256: String,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn meta_path(artifact: &Path) -> PathBuf {
    with_suffix(artifact, ".meta.json")
}

pub fn failed_marker(artifact: &Path) -> PathBuf {
    with_suffix(artifact, ".failed")
}

pub(super) fn prepare(artifact: &Path) -> Result<()> {
    if let Some(dir) = artifact.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Writes the artifact and its sidecar, and clears an old failure marker.
pub fn write_artifact(path: &Path, stage: &str, bytes: &[u8]) -> Result<()> {
    prepare(path)?;
    let io = |p: &Path, e: std::io::Error| PipelineError::Io(format!("{}: {e}", p.display()));
    std::fs::write(path, bytes).map_err(|e| io(path, e))?;
    let meta = ArtifactMeta {
        stage: stage.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        written_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        sha256: sha256_hex(bytes),
    };
    let mp = meta_path(path);
    std::fs::write(&mp, serde_json::to_string_pretty(&meta).expect("meta serializes") + "\n").map_err(|e| io(&mp, e))?;
    let marker = failed_marker(path);
    if marker.exists() {
        std::fs::remove_file(&marker).map_err(|e| io(&marker, e))?;
    }
    Ok(())
}

pub(super) fn mark_failed(artifact: &Path, err: &PipelineError) {
    let marker = failed_marker(artifact);
    if prepare(&marker).is_ok() {
        if let Err(e) = std::fs::write(&marker, format!("{err}\n")) {
            log::error!("could not write {}: {e}", marker.display());
        }
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| PipelineError::Io(format!("{}: {e}", p.display())))
}

/// `target` as seen from directory `base`; both must exist.
pub fn relative_path(target: &Path, base: &Path) -> Result<String> {
    let t = absolute(target)?;
    let b = absolute(base)?;
    let tc: Vec<Component> = t.components().collect();
    let bc: Vec<Component> = b.components().collect();
    let common = tc.iter().zip(&bc).take_while(|(x, y)| x == y).count();
    let mut rel: Vec<String> = std::iter::repeat("..".to_string()).take(bc.len() - common).collect();
    rel.extend(tc[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    Ok(rel.join("/"))
}

/// Digest of `input`, named relative to the directory `artifact` lives in.
pub fn digest_for(input: &Path, artifact: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(input).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingInput(input.to_path_buf()),
        _ => PipelineError::Io(format!("{}: {e}", input.display())),
    })?;
    let dir = match artifact.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from("."),
    };
    Ok(InputDigest {
        name: relative_path(input, &dir)?,
        sha256: sha256_hex(&bytes),
    })
}
