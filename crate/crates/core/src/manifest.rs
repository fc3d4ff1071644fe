//! Run manifests tying output artifacts to their inputs and settings.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Digest of everything except timestamps; outputs carry this id.
    pub manifest_id: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Input path -> SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: serde_json::Value,
        inputs: BTreeMap<String, String>,
        seed: Option<u64>,
        started_at: String,
    ) -> Self {
        let tool_version = env!("CARGO_PKG_VERSION").to_owned();
        let identity = serde_json::json!({
            "tool_version": tool_version,
            "command": command,
            "config": config,
            "inputs": inputs,
            "seed": seed,
        });
        let digest = Sha256::digest(identity.to_string().as_bytes());
        Self {
            manifest_id: hex::encode(&digest[..8]),
            tool_version,
            command: command.to_owned(),
            config,
            inputs,
            seed,
            started_at,
            finished_at: None,
        }
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = match file.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
