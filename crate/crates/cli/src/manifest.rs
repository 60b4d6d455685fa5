//! Run manifests: what was run, with which settings, on which files.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

thread_local! {
    static ARGV: RefCell<Option<Vec<String>>> = const { RefCell::new(None) };
}

/// Records the argument vector for manifests written on this thread.
pub fn set_arguments(args: Vec<String>) {
    ARGV.with(|a| *a.borrow_mut() = Some(args));
}

fn arguments() -> Vec<String> {
    ARGV.with(|a| a.borrow().clone())
        .unwrap_or_else(|| std::env::args().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Full argument vector, enough to rerun the command.
    pub arguments: Vec<String>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    /// Resolved model settings in config-file form.
    pub config: Option<String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        RunManifest {
            tool: "proxcerf",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            arguments: arguments(),
            seed: None,
            chains: None,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn finish(mut self, dir: &Path) -> Result<PathBuf, CliError> {
        self.finished_unix = unix_now();
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::new(4, format!("cannot encode manifest: {e}")))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
