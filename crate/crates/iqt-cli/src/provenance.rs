//! Provenance sidecars: every output volume gets a JSON file naming the
//! command, its inputs (with content hashes), the parameters used and the
//! toolkit version.

use std::path::{Path, PathBuf};

use iqt::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct ProvenanceFile {
    pub command: String,
    pub toolkit_version: String,
    pub inputs: Vec<InputRecord>,
    pub parameters: serde_json::Value,
}

pub fn hash_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path.as_ref())?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn input_record(path: impl AsRef<Path>) -> Result<InputRecord> {
    Ok(InputRecord {
        path: path.as_ref().display().to_string(),
        sha256: hash_file(&path)?,
    })
}

/// Sidecar path for an output: strips ".nii"/".nii.gz"/other extensions and
/// appends ".provenance.json".
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut p = output.to_path_buf();
    while p.extension().is_some() {
        p = p.with_extension("");
    }
    let name = format!(
        "{}.provenance.json",
        p.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    );
    p.with_file_name(name)
}

/// Write the provenance sidecar next to `output`.
pub fn write_sidecar(
    output: &Path,
    command: &str,
    inputs: Vec<InputRecord>,
    parameters: serde_json::Value,
) -> Result<()> {
    let record = ProvenanceFile {
        command: command.to_string(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        parameters,
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| iqt::IqtError::Format(format!("provenance encode: {e}")))?;
    std::fs::write(sidecar_path(output), json)?;
    Ok(())
}
