//! Run manifest: per-stage input/output digests and timings.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
    #[serde(default)]
    pub details: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub master_seed: u64,
    pub config_digest: String,
    pub stages: BTreeMap<String, StageEntry>,
}

impl RunManifest {
    pub fn new(master_seed: u64, config_digest: String) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config_digest,
            stages: BTreeMap::new(),
        }
    }

    /// Load the manifest from a run directory, or start a fresh one. A
    /// fresh directory gets a fresh manifest; an existing one must match the
    /// current config digest, otherwise mixing artifacts from different
    /// configurations would go unnoticed.
    pub fn load_or_new(dir: &Path, master_seed: u64, config_digest: String) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::new(master_seed, config_digest));
        }
        let manifest: RunManifest = io::read_json(&path)?;
        if manifest.config_digest != config_digest {
            return Err(Error::DigestMismatch {
                path,
                expected: manifest.config_digest,
                found: config_digest,
            });
        }
        Ok(manifest)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_json_atomic(&dir.join(MANIFEST_FILE), self)
    }

    /// Digest of a recorded output with the given file name, if any stage
    /// produced it.
    pub fn recorded_output(&self, file_name: &str) -> Option<&str> {
        self.stages
            .values()
            .find_map(|s| s.outputs.get(file_name).map(String::as_str))
    }

    /// Check a stage input: the file must exist, and when the manifest has a
    /// recorded digest for it, the bytes on disk must still match. Returns
    /// the digest.
    pub fn verify_input(
        &self,
        dir: &Path,
        file_name: &str,
        producer: &'static str,
    ) -> Result<String> {
        let path = dir.join(file_name);
        if !path.exists() {
            return Err(Error::MissingInput { path, producer });
        }
        let found = io::file_digest(&path)?;
        if let Some(expected) = self.recorded_output(file_name) {
            if expected != found {
                return Err(Error::DigestMismatch {
                    path,
                    expected: expected.to_string(),
                    found,
                });
            }
        }
        Ok(found)
    }
}
