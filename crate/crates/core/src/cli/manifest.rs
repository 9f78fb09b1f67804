use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numerics::write_atomic;
use crate::samplebank::{short_hash, BANK_VERSION};

/// Record of one command invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u64,
    pub finished_ms: u64,
    pub versions: BTreeMap<String, String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// Fingerprint of a config value: short SHA-256 of its compact JSON.
pub fn hash_config(config: &Value) -> String {
    short_hash(config.to_string().as_bytes())
}

pub fn artifact_versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("genaug".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("bank_format".to_string(), BANK_VERSION.to_string()),
    ])
}

impl RunManifest {
    pub fn begin(command: &str, seed: u64, config: Value) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: hash_config(&config),
            seed,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_ms: now_ms(),
            finished_ms: 0,
            versions: artifact_versions(),
        }
    }

    pub fn path_in(out_dir: &Path, command: &str) -> PathBuf {
        out_dir.join(format!("manifest-{command}.json"))
    }

    /// Stamps the end time and writes the manifest into `out_dir`; the manifest
    /// itself is listed among the outputs.
    pub fn finish(mut self, out_dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(out_dir, &self.command);
        self.outputs.push(path.clone());
        self.finished_ms = now_ms();
        write_atomic(&path, serde_json::to_string_pretty(&self)?.as_bytes())?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    /// The stored config hashes to the stored fingerprint.
    pub fn is_consistent(&self) -> bool {
        hash_config(&self.config) == self.config_hash
    }
}

/// Recursively overlays `top` onto `base`: objects merge key by key, anything else
/// replaces.
pub fn merge_json(base: &mut Value, top: &Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, t) => *b = t.clone(),
    }
}
