//! Run manifest: every artifact a grid cell produced, with content
//! hashes, so re-runs can prove reuse is safe and reports stay
//! traceable to their inputs.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellRecord {
    /// Content hash of everything that determines this cell's outputs.
    pub key: String,
    /// "ok" or "failed: <message>".
    pub status: String,
    /// Relative output path → sha256 of the file.
    pub outputs: BTreeMap<String, String>,
}

impl CellRecord {
    pub fn succeeded(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub cells: BTreeMap<String, CellRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn load_or_default(path: &Path) -> Manifest {
        Self::load(path).unwrap_or_default()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// A cell is reusable when its key matches and every recorded
    /// output still exists with the recorded hash.
    pub fn reusable(&self, name: &str, key: &str, root: &Path) -> bool {
        match self.cells.get(name) {
            Some(rec) if rec.key == key && rec.succeeded() => {
                rec.outputs.iter().all(|(rel, hash)| {
                    hash_file(&root.join(rel)).map(|h| h == *hash).unwrap_or(false)
                })
            }
            _ => false,
        }
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    crate::text::vocab::hex(&h.finalize())
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(hash_bytes(&std::fs::read(path)?))
}

/// Hash a list of labelled components into one key.
pub fn hash_parts(parts: &[(&str, &str)]) -> String {
    let mut h = Sha256::new();
    for (label, value) in parts {
        h.update(label.as_bytes());
        h.update([0x1f]);
        h.update(value.as_bytes());
        h.update([0x1e]);
    }
    crate::text::vocab::hex(&h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reuse_requires_key_and_file_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("cell/out.txt");
        std::fs::create_dir_all(out.parent().unwrap()).unwrap();
        std::fs::write(&out, "payload").unwrap();
        let mut m = Manifest::default();
        m.cells.insert(
            "cell".into(),
            CellRecord {
                key: "k1".into(),
                status: "ok".into(),
                outputs: [(
                    "cell/out.txt".to_string(),
                    hash_file(&out).unwrap(),
                )]
                .into(),
            },
        );
        assert!(m.reusable("cell", "k1", dir.path()));
        assert!(!m.reusable("cell", "k2", dir.path()));
        std::fs::write(&out, "tampered").unwrap();
        assert!(!m.reusable("cell", "k1", dir.path()));
    }

    #[test]
    fn manifest_roundtrips_and_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = Manifest::default();
        m.cells.insert(
            "a".into(),
            CellRecord {
                key: "x".into(),
                status: "ok".into(),
                outputs: BTreeMap::new(),
            },
        );
        m.save(&path).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded, m);
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn part_hashes_distinguish_labels() {
        let a = hash_parts(&[("x", "1"), ("y", "2")]);
        let b = hash_parts(&[("x", "12"), ("y", "")]);
        assert_ne!(a, b);
    }
}
