//! Run manifests: what was run, on what, producing what.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl InputRecord {
    pub fn new(path: &Path, bytes: &[u8]) -> Self {
        Self {
            path: fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
            sha256: sha256_hex(bytes),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Every flag after defaults and environment fallbacks.
    pub config: Value,
    /// `config` as a command line that reproduces the run.
    pub argv: Vec<String>,
    pub input: Option<InputRecord>,
    pub artifacts: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
    pub timings: Value,
}

impl Manifest {
    pub fn write(&self, path: Option<&Path>) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        match path {
            Some(p) => fs::write(p, text),
            None => std::io::stderr().lock().write_all(text.as_bytes()),
        }
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// `<artifact>.manifest.json`
pub fn sidecar(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Flattens serialized flags back into a command line: `true` booleans
/// become bare switches, lists are comma-joined, absent options are dropped.
pub fn to_argv(command: &str, config: &Value) -> Vec<String> {
    let mut argv = vec![command.to_owned()];
    let Value::Object(map) = config else {
        return argv;
    };
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => argv.push(flag),
            Value::Array(items) => {
                argv.push(flag);
                argv.push(items.iter().map(scalar).collect::<Vec<_>>().join(","));
            }
            other => {
                argv.push(flag);
                argv.push(scalar(other));
            }
        }
    }
    argv
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
