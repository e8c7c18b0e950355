use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Record of one invocation. The id hashes only what determines the
/// results (command, parameters, seed, version), so repeated runs produce
/// byte-identical outputs; wall-clock time lives only in the manifest file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub id: String,
    pub command: String,
    pub params: Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_unix: f64,
}

impl RunManifest {
    pub fn new(command: &str, params: Value, seed: Option<u64>) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let canonical = serde_json::json!({
            "command": command,
            "params": params,
            "seed": seed,
            "version": version,
        });
        let digest = Sha256::digest(canonical.to_string().as_bytes());
        let id = digest.iter().map(|b| format!("{b:02x}")).collect::<String>();
        let wall_clock_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        RunManifest {
            id: id[..16].to_string(),
            command: command.to_string(),
            params,
            seed,
            version,
            outputs: Vec::new(),
            wall_clock_unix,
        }
    }

    /// Writes `text` to `path` and records it as an output.
    pub fn write_output(&mut self, path: &Path, text: &str) -> Result<(), CliError> {
        write_file(path, text)?;
        self.outputs.push(path.to_path_buf());
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("manifest-{}.json", self.id));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&path, &(text + "\n"))?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
