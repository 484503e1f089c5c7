//! `manifest.json`: every artifact under the output directory with the command
//! and configuration hash that wrote it and a SHA-256 of its bytes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entry {
    pub command: String,
    pub config_hash: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Keyed by path relative to the output directory, `/`-separated.
    pub files: BTreeMap<String, Entry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    /// The manifest in `dir`, or an empty one if none exists yet.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        match std::fs::read(&path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::codec::write(&dir.join(FILE_NAME), text.as_bytes())
    }

    pub fn record(&mut self, relative: &str, command: &str, config_hash: u64, bytes: &[u8]) {
        self.files.insert(
            relative.to_string(),
            Entry {
                command: command.to_string(),
                config_hash: crate::config::hash_hex(config_hash),
                sha256: sha256_hex(bytes),
            },
        );
    }
}
