use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Everything needed to re-run an experiment bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub rng: String,
    pub seeds: Vec<u64>,
    /// SHA-256 of each input dataset's canonical encoding, keyed by role.
    pub dataset_hashes: BTreeMap<String, String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self> {
        Ok(Self {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            rng: "ChaCha8Rng (rand_chacha), seeded per run".into(),
            seeds,
            dataset_hashes: BTreeMap::new(),
            config: serde_json::to_value(config)?,
            notes: Vec::new(),
        })
    }

    pub fn with_dataset(mut self, role: &str, hash: String) -> Self {
        self.dataset_hashes.insert(role.to_string(), hash);
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}
