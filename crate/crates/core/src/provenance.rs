//! Provenance stamped into every artifact: tool version, config hash, seed and
//! digests of the input artifacts it was derived from.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "driveforge";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a serializable config value (canonical compact JSON).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    /// File name relative to the artifact's directory.
    pub name: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self {
            name: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn with_input(mut self, digest: InputDigest) -> Self {
        self.inputs.push(digest);
        self
    }
}
