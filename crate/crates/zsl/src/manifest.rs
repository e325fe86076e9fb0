//! Run manifests: every stage with the digests of what it read and wrote.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifact::{file_digest, read_json, write_json};
use crate::error::Result;

pub const MANIFEST: &str = "zsl-manifest";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<ArtifactDigest>,
    pub outputs: Vec<ArtifactDigest>,
    pub started_unix: u64,
    pub finished_unix: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub threads: usize,
    /// Single-threaded training and order-preserving parallel mapping.
    pub deterministic: bool,
    /// Every hyperparameter, as resolved for this run.
    pub config: Value,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// `ok`, or `failed` with the stage and cause. Outputs of a failed run
    /// may be partial.
    pub status: String,
    pub stages: Vec<StageRecord>,
    #[serde(default)]
    pub summary: BTreeMap<String, Value>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Forward-slash path of `path` relative to `root` (or as given when it is
/// not below `root`).
pub fn display_path(path: &Path, root: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn digest(path: &Path, shown_as: String) -> Result<ArtifactDigest> {
    Ok(ArtifactDigest {
        path: shown_as,
        sha256: file_digest(path)?,
    })
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Every `(path, digest)` pair, inputs and outputs, in stage order.
    pub fn digests(&self) -> Vec<(&str, &str)> {
        self.stages
            .iter()
            .flat_map(|s| s.inputs.iter().chain(&s.outputs))
            .map(|d| (d.path.as_str(), d.sha256.as_str()))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, MANIFEST, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path, MANIFEST)
    }
}
