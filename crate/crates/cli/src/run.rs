//! Run directories and manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Environment variable naming the directory that holds run directories.
pub const RUN_ROOT_VAR: &str = "MULTIQT_RUN_ROOT";

pub fn run_root() -> PathBuf {
    std::env::var_os(RUN_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of a dataset directory: its manifest followed by every call file in
/// manifest order.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mpath = dir.join(multiqt::synthdata::MANIFEST);
    let manifest = std::fs::read(&mpath).with_context(|| format!("cannot read {}", mpath.display()))?;
    let mut h = Sha256::new();
    h.update(&manifest);
    let text = String::from_utf8_lossy(&manifest);
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("id\t")) {
        if let Some(file) = line.split('\t').nth(1) {
            let p = dir.join(file);
            h.update(std::fs::read(&p).with_context(|| format!("cannot read {}", p.display()))?);
        }
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_hash: Option<String>,
    pub metrics: Value,
    pub wall_seconds: f64,
}

/// A run directory named by the hash of its inputs, so a rerun with equal
/// inputs lands in (and reproduces) the same directory while different
/// inputs never overwrite each other.
pub struct Run {
    pub dir: PathBuf,
    command: String,
    config: Value,
    seed: u64,
    dataset_hash: Option<String>,
    started: Instant,
}

impl Run {
    pub fn open(command: &str, config: Value, seed: u64, dataset_hash: Option<String>) -> Result<Self> {
        let key = serde_json::to_vec(&(command, &config, seed, &dataset_hash))?;
        let dir = run_root().join(format!("{command}-{}", &sha256_hex(&key)[..12]));
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir,
            command: command.into(),
            config,
            seed,
            dataset_hash,
            started: Instant::now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json(&self, name: &str, v: &impl Serialize) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, serde_json::to_string_pretty(v)? + "\n").with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }

    pub fn finish(self, checkpoint_hash: Option<String>, metrics: Value) -> Result<PathBuf> {
        let m = RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            dataset_hash: self.dataset_hash.clone(),
            checkpoint_hash,
            metrics,
            wall_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.write_json("manifest.json", &m)?;
        Ok(self.dir)
    }
}
