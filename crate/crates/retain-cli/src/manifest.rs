//! Run manifest: every invocation records its resolved parameters and
//! content digests of inputs and outputs, so any artifact can be traced
//! back to the exact run that produced it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Every parameter after flag/config/default resolution.
    pub parameters: BTreeMap<String, String>,
    /// path -> sha256 of each input file.
    pub input_digests: BTreeMap<String, String>,
    /// path -> sha256 of each written artifact.
    pub output_digests: BTreeMap<String, String>,
    pub master_seed: u64,
    pub tool_version: String,
    /// Unix seconds; excluded from reproducibility comparisons.
    pub started_at: u64,
    pub finished_at: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn digest_file(path: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

impl RunManifest {
    pub fn start(subcommand: &str, master_seed: u64) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            parameters: BTreeMap::new(),
            input_digests: BTreeMap::new(),
            output_digests: BTreeMap::new(),
            master_seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: 0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    pub fn record_input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.input_digests
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> anyhow::Result<()> {
        self.output_digests
            .insert(path.display().to_string(), digest_file(path)?);
        Ok(())
    }

    /// Finish and write `manifest.json` (directory targets) or
    /// `<file>.manifest.json` (single-file targets).
    pub fn finish(mut self, target: &Path) -> anyhow::Result<()> {
        self.finished_at = now();
        let path = manifest_path(target);
        fs::write(&path, serde_json::to_string_pretty(&self)?)?;
        Ok(())
    }
}

pub fn manifest_path(target: &Path) -> std::path::PathBuf {
    if target.is_dir() {
        target.join("manifest.json")
    } else {
        let mut name = target.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        target.with_file_name(name)
    }
}
