use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use defi_tiers::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to each stage's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub parameter_hash: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub parameters: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Hash of the canonical JSON form of the full configuration.
pub fn parameter_hash(cfg: &RunConfig) -> Result<String> {
    let value = serde_json::to_value(cfg)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&value)?)))
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? })
}

pub fn write_manifest(command: &str, cfg: &RunConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<PathBuf> {
    let inputs: BTreeMap<String, FileDigest> =
        inputs.iter().map(|p| digest(p).map(|d| (d.path.clone(), d))).collect::<Result<_>>()?;
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        parameter_hash: parameter_hash(cfg)?,
        inputs: inputs.into_values().collect(),
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        parameters: serde_json::to_value(cfg)?,
    };
    let path = cfg.out.join(format!("manifest_{command}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}
