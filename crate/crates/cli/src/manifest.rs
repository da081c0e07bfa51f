//! Run identity and manifests.
//!
//! A run id is the first 16 hex digits of SHA-256 over the command name, the
//! resolved configuration and the digests of the input files. Thread count
//! and output directory are execution settings and do not enter it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};
use titv_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(InputDigest {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

pub fn run_id(command: &str, config: &serde_json::Value, inputs: &[InputDigest]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0u8]);
    h.update(config.to_string().as_bytes());
    for i in inputs {
        h.update([0u8]);
        h.update(i.sha256.as_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

#[derive(Clone, Debug, Serialize)]
pub struct Timings {
    pub started_unix_seconds: u64,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub argv: Vec<String>,
    /// Every setting the command used, defaults included.
    pub config: serde_json::Value,
    pub threads: usize,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<PathBuf>,
    pub timings: Timings,
}

/// One command invocation that produces files under `out_dir`.
pub struct Run {
    pub id: String,
    command: String,
    argv: Vec<String>,
    config: serde_json::Value,
    threads: usize,
    inputs: Vec<InputDigest>,
    out_dir: PathBuf,
    artifacts: Vec<PathBuf>,
    started: Instant,
    started_unix: u64,
}

impl Run {
    pub fn start<C: Serialize>(
        command: &str,
        argv: &[String],
        config: &C,
        inputs: &[&Path],
        out_dir: &Path,
        threads: usize,
    ) -> Result<Run> {
        let config = serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?;
        let inputs = inputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<Vec<_>>>()?;
        fs::create_dir_all(out_dir).map_err(|e| Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        Ok(Run {
            id: run_id(command, &config, &inputs),
            command: command.into(),
            argv: argv.to_vec(),
            config,
            threads,
            inputs,
            out_dir: out_dir.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    /// `<out_dir>/<run_id>.<suffix>`, registered as an artifact.
    pub fn artifact(&mut self, suffix: &str) -> PathBuf {
        let p = self.out_dir.join(format!("{}.{suffix}", self.id));
        self.add(p.clone());
        p
    }

    pub fn add(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }

    /// Writes `<run_id>.manifest.json` and returns its path.
    pub fn finish(self) -> Result<PathBuf> {
        let path = self.out_dir.join(format!("{}.manifest.json", self.id));
        let manifest = RunManifest {
            run_id: self.id,
            command: self.command,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            argv: self.argv,
            config: self.config,
            threads: self.threads,
            inputs: self.inputs,
            artifacts: self.artifacts,
            timings: Timings {
                started_unix_seconds: self.started_unix,
                wall_seconds: self.started.elapsed().as_secs_f64(),
            },
        };
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}
