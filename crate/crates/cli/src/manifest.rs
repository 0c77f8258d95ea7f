//! Run manifests: one JSON file per command invocation, written alongside
//! the outputs. Re-running a command with identical inputs and seed yields
//! a manifest that differs only in the wall-clock fields.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub input_digests: BTreeMap<String, String>,
    pub seed: u64,
    pub toolkit_version: String,
    pub started_unix_ms: u128,
    pub duration_ms: u128,
    pub outputs: Vec<String>,
}

/// Collects inputs and timing for a command run, then writes the manifest.
pub struct ManifestBuilder {
    command: String,
    config_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    started_unix_ms: u128,
    started: Instant,
}

impl ManifestBuilder {
    /// `config` is the resolved argument set; any serializable struct works.
    pub fn new<C: Serialize>(command: &str, config: &C, seed: u64) -> Result<ManifestBuilder> {
        let config_json = serde_json::to_vec(config)?;
        Ok(ManifestBuilder {
            command: command.to_string(),
            config_hash: hex_digest(&config_json),
            seed,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            started: Instant::now(),
        })
    }

    /// Record an input file digest under its display path.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = digest_file(path)
            .with_context(|| format!("digesting input {}", path.display()))?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Record every regular file under a directory (recursively).
    pub fn add_input_dir(&mut self, dir: &Path) -> Result<()> {
        for path in walk_files(dir)? {
            self.add_input(&path)?;
        }
        Ok(())
    }

    pub fn add_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    /// Write `manifest.json` into `out_dir`.
    pub fn write(self, out_dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            input_digests: self.inputs,
            seed: self.seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: self.started_unix_ms,
            duration_ms: self.started.elapsed().as_millis(),
            outputs: self.outputs,
        };
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Create the output directory; refuse a pre-existing one without `force`.
pub fn prepare_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !force {
            bail!(
                "output directory {} already exists; pass --force to reuse it",
                out.display()
            );
        }
    } else {
        fs::create_dir_all(out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
    }
    Ok(())
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn digest_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn walk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&current)
            .with_context(|| format!("reading {}", current.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    Ok(files)
}
