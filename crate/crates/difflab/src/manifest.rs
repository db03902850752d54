//! `manifest.json`: the last file a command writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::HarnessResult;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub root_seed: u64,
    /// Derived seeds by purpose.
    pub seeds: BTreeMap<String, u64>,
    /// Artifact file names relative to the output directory.
    pub files: Vec<String>,
    pub config: serde_json::Value,
}

/// Tracks artifacts of one command and writes the manifest on success.
pub struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    /// Create the output directory and drop any manifest from an earlier run.
    pub fn start(dir: &Path, command: &str, cfg: &crate::config::ExperimentConfig) -> HarnessResult<Self> {
        fs::create_dir_all(dir)?;
        let stale = dir.join(MANIFEST_NAME);
        if stale.exists() {
            fs::remove_file(&stale)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_owned(),
                config_hash: cfg.hash(),
                root_seed: cfg.seed,
                seeds: BTreeMap::new(),
                files: Vec::new(),
                config: serde_json::to_value(cfg)?,
            },
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for artifact `name`, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.manifest.files.push(name.to_owned());
        self.dir.join(name)
    }

    pub fn seed(&mut self, purpose: &str, seed: u64) {
        self.manifest.seeds.insert(purpose.to_owned(), seed);
    }

    pub fn finish(self) -> HarnessResult<Manifest> {
        let tmp = self.dir.join(format!("{MANIFEST_NAME}.tmp"));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.dir.join(MANIFEST_NAME))?;
        Ok(self.manifest)
    }
}
