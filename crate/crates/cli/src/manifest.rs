//! Run manifests: the reproducibility record written next to every output.
//!
//! The manifest hash covers the tool version, subcommand, resolved
//! configuration and master seed, so a re-run with the same manifest
//! produces byte-identical CSV outputs. Timestamps and output hashes are
//! recorded in the manifest file but excluded from the hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vigil_core::config::FileConfig;

#[derive(Debug, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub manifest_hash: String,
    pub master_seed: u64,
    /// Named derivation paths for the per-module streams.
    pub module_seeds: BTreeMap<String, u64>,
    pub config: FileConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn begin(command: &str, config: &FileConfig, master_seed: u64) -> Result<Self> {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let config_text =
            toml::to_string(config).context("serializing resolved configuration")?;
        let key = format!("{version}\n{command}\n{master_seed}\n{config_text}");
        let manifest_hash = sha256_hex(key.as_bytes())[..16].to_string();
        let mut module_seeds = BTreeMap::new();
        for path in ["sim/exposure", "sim/counts", "cv/replicate", "mcmc", "sweep/seed"] {
            module_seeds
                .insert(path.to_string(), vigil_core::rng::derive_seed(master_seed, path, 0));
        }
        Ok(RunManifest {
            tool_version: version,
            command: command.to_string(),
            manifest_hash,
            master_seed,
            module_seeds,
            config: config.clone(),
            started_unix: now_unix(),
            finished_unix: 0,
            outputs: Vec::new(),
        })
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .with_context(|| format!("hashing output {}", path.display()))?;
        self.outputs.push(OutputFile {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        self.finished_unix = now_unix();
        let path = out_dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&self)?;
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }

    /// Comment line placed at the top of every output CSV.
    pub fn csv_header(&self) -> Vec<String> {
        vec![format!("manifest={}", self.manifest_hash)]
    }
}

/// Write via a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming into place: {}", path.display()))?;
    Ok(())
}
