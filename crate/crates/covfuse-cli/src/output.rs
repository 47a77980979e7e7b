//! Output plumbing: locale-independent CSV, run manifests with artifact
//! checksums, and output-directory handling.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// 17-significant-digit scientific notation; decimal point, no locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write an RFC-4180-style CSV (header row, comma separators, `\n` line
/// endings; all fields here are numeric or bare identifiers, so no quoting
/// is ever needed).
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Provenance record for one command invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out_dir: String,
    /// file name → SHA-256 of its bytes, for every emitted artifact.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Create (or re-open) the output directory. Refuses to reuse a directory
/// whose recorded config hash differs, unless `force` is set.
pub fn prepare_out_dir(out: &Path, config_hash: &str, force: bool) -> Result<(), CliError> {
    let manifest_path = out.join("manifest.json");
    if manifest_path.exists() && !force {
        let existing: RunManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)
            .map_err(|e| CliError::Config(format!("unreadable manifest.json: {e}")))?;
        if existing.config_hash != config_hash {
            return Err(CliError::Config(format!(
                "output directory {} holds results for a different config (hash {} vs {}); pass --force to overwrite",
                out.display(),
                existing.config_hash,
                config_hash
            )));
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

/// Checksum the artifacts and write `manifest.json`.
pub fn finalize_manifest(
    out: &Path,
    mut manifest: RunManifest,
    artifacts: &[PathBuf],
) -> Result<(), CliError> {
    for artifact in artifacts {
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        manifest.artifacts.insert(name, sha256_file(artifact)?);
    }
    let mut file = fs::File::create(out.join("manifest.json"))?;
    file.write_all(
        serde_json::to_string_pretty(&manifest)
            .expect("manifest is serializable")
            .as_bytes(),
    )?;
    file.write_all(b"\n")?;
    Ok(())
}

/// `--out` flag, falling back to the COVFUSE_OUT_DIR environment variable.
pub fn resolve_out_dir(flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Some(dir) = std::env::var_os("COVFUSE_OUT_DIR") {
        return Ok(PathBuf::from(dir));
    }
    Err(CliError::Config(
        "no output directory: pass --out or set COVFUSE_OUT_DIR".into(),
    ))
}
