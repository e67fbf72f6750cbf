//! Atomic artifact writing and the run manifest.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::run::{Artifact, Run, RunError};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: String,
    pub config_sha256: String,
    pub bosim_version: String,
    pub core_version: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn io(e: impl std::fmt::Display) -> RunError {
    RunError::Io(e.to_string())
}

/// Writes each file through a temporary in the target directory and renames
/// it into place; the manifest goes last.
pub fn write_all(dir: &Path, artifacts: &[Artifact], manifest: &Manifest) -> Run<()> {
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut body = serde_json::to_string_pretty(manifest).expect("plain data");
    body.push('\n');
    for (name, bytes) in artifacts
        .iter()
        .map(|a| (a.name.as_str(), a.bytes.as_slice()))
        .chain(std::iter::once(("manifest.json", body.as_bytes())))
    {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(dir.join(name)).map_err(io)?;
    }
    Ok(())
}
