//! Artifact writing: CSV tables, metadata and timestamps.
//!
//! Primary outputs depend only on the configuration, the seed and the input
//! bytes. Wall-clock times go to a separate file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Content hash in git's object framing (`blob <len>\0<bytes>`), SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    /// File name only, so moving the inputs does not change the metadata.
    pub name: String,
    pub hash: String,
}

pub struct Inputs(pub Vec<InputRecord>);

impl Inputs {
    pub fn new() -> Inputs {
        Inputs(Vec::new())
    }

    pub fn add(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.0.push(InputRecord { role: role.into(), name, hash: content_hash(bytes) });
    }

    pub fn synthetic(&mut self, role: &str, text: &str) {
        self.0.push(InputRecord { role: role.into(), name: "<synthetic>".into(), hash: content_hash(text.as_bytes()) });
    }
}

pub struct OutDir {
    pub root: PathBuf,
    started: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), started: now() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write(name, &String::from_utf8(bytes)?)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// `metadata.json` plus `timestamps.json`.
    pub fn finish(&self, metadata: &serde_json::Value) -> Result<()> {
        self.json("metadata.json", metadata)?;
        self.json("timestamps.json", &serde_json::json!({ "started_unix": self.started, "finished_unix": now() }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_framing() {
        // printf 'hello\n' | git hash-object --object-format=sha256 --stdin
        assert_eq!(content_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
    }
}
