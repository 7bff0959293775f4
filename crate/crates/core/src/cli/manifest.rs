use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::Config;
use crate::error::Result;
use crate::io::{file_sha256, read_json, sha256_hex, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written next to every stage's outputs.
///
/// `stage_key` hashes the inputs and the settings the stage reads, so a stage
/// whose key and outputs are unchanged can be skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub stage_key: String,
    pub config: BTreeMap<String, String>,
    pub dataset_hash: Option<String>,
    pub seed: Option<u64>,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file name (relative to the stage directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub created_unix: u64,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(stage: &str, cfg: &Config, inputs: BTreeMap<String, String>, keys: &[&str], extra: &[&str]) -> Self {
        let snapshot = cfg.snapshot();
        let mut material = format!("stage={stage}\n");
        for k in keys {
            material.push_str(&format!("{k}={}\n", snapshot.get(*k).map_or("", String::as_str)));
        }
        for (p, h) in &inputs {
            material.push_str(&format!("input {p} {h}\n"));
        }
        for e in extra {
            material.push_str(&format!("extra {e}\n"));
        }
        RunManifest {
            stage: stage.to_string(),
            stage_key: sha256_hex(material.as_bytes()),
            config: snapshot,
            dataset_hash: None,
            seed: None,
            inputs,
            outputs: BTreeMap::new(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn record_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let h = file_sha256(&dir.join(name))?;
        self.outputs.insert(name.to_string(), h);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// True when `dir` holds a manifest with the same stage key whose outputs
    /// all exist with the recorded hashes.
    pub fn is_current(dir: &Path, stage_key: &str) -> bool {
        let Ok(old) = Self::read(dir) else { return false };
        old.stage_key == stage_key
            && !old.outputs.is_empty()
            && old
                .outputs
                .iter()
                .all(|(name, h)| file_sha256(&dir.join(name)).is_ok_and(|got| &got == h))
    }
}

/// SHA-256 of each non-empty input path.
pub fn hash_inputs(paths: &[&str]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for p in paths.iter().filter(|p| !p.trim().is_empty()) {
        out.insert(p.to_string(), file_sha256(&PathBuf::from(p))?);
    }
    Ok(out)
}
