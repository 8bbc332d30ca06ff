use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Hash of the effective configuration, serialised canonically.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<OutputFile>,
    pub started: String,
    pub finished: String,
    /// Non-hashed run information such as wall-clock time.
    #[serde(default)]
    pub info: serde_json::Value,
}

/// Collects output files for one run and writes the manifest last.
pub struct OutputDir {
    dir: PathBuf,
    command: String,
    config_sha256: String,
    seed: Option<u64>,
    started: String,
    outputs: Vec<OutputFile>,
    info: serde_json::Map<String, serde_json::Value>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl OutputDir {
    pub fn create(dir: &Path, command: &str, config_json: &str, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seed,
            started: now(),
            outputs: Vec::new(),
            info: serde_json::Map::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn note(&mut self, key: &str, value: serde_json::Value) {
        self.info.insert(key.to_string(), value);
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            command: self.command,
            config_sha256: self.config_sha256,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.outputs,
            started: self.started,
            finished: now(),
            info: serde_json::Value::Object(self.info),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
