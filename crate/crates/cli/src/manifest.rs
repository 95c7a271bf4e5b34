use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::job::Job;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL: &str = "fjsync";

/// Everything needed to reproduce one run: the fully resolved job, its
/// seeds and the names of the files it wrote (relative to the run directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub job: Job,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(job: Job) -> Self {
        RunManifest {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: job.seeds(),
            outputs: job.output_files(),
            job,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    /// Hex SHA-256 of the serialized manifest.
    pub fn content_hash(&self) -> serde_json::Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(hex::encode(digest))
    }

    /// `runs/<subcommand>-<first 16 hex digits of the content hash>`.
    pub fn default_dir(&self) -> serde_json::Result<PathBuf> {
        let hash = self.content_hash()?;
        Ok(Path::new("runs").join(format!("{}-{}", self.job.name(), &hash[..16])))
    }

    pub fn read(path: &Path) -> Result<Self, fjsync::Error> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
