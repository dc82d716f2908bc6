use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// An input path that does not exist. Reported with exit code 2.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl std::fmt::Display for MissingInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "input file not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Provenance record written as `manifest.json` into every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Full command line, program name first.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Resolves input paths against the data directory and records digests.
pub struct Recorder {
    command: String,
    data_dir: Option<PathBuf>,
    inputs: Vec<InputDigest>,
    started_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Recorder {
    pub fn new(command: &str, data_dir: Option<PathBuf>) -> Self {
        Recorder {
            command: command.to_string(),
            data_dir,
            inputs: Vec::new(),
            started_at: now(),
        }
    }

    /// Resolve a relative path against the data directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.data_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    /// Resolve an input path, check it exists and record its digest.
    pub fn input(&mut self, role: &str, path: &Path) -> anyhow::Result<PathBuf> {
        let resolved = self.resolve(path);
        if !resolved.is_file() {
            return Err(MissingInput(resolved).into());
        }
        self.inputs.push(InputDigest {
            role: role.to_string(),
            path: resolved.clone(),
            sha256: sha256_file(&resolved)?,
        });
        Ok(resolved)
    }

    pub fn optional_input(&mut self, role: &str, path: Option<&Path>) -> anyhow::Result<Option<PathBuf>> {
        path.map(|p| self.input(role, p)).transpose()
    }

    pub fn finish(self, out_dir: &Path, config: serde_json::Value, seed: Option<u64>) -> anyhow::Result<()> {
        let manifest = Manifest {
            command: self.command,
            args: std::env::args().collect(),
            config,
            inputs: self.inputs,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
        };
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }
}
