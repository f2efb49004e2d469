//! Content-addressed artifact cache. Keys hash the image bytes together with
//! every parameter that influences the artifact, so a hit is always valid.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Result, StageExt};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of `params` prefixed by `parts`.
pub fn key_of(parts: &[&str], params: &impl Serialize) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.update(serde_json::to_vec(params).expect("parameters serialize"));
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, kind: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(kind).join(format!("{key}.{ext}"))
    }

    pub fn get(&self, kind: &str, key: &str, ext: &str) -> Option<Vec<u8>> {
        std::fs::read(self.path(kind, key, ext)).ok()
    }

    /// Writes through a temporary file so readers never see partial entries.
    pub fn put(&self, kind: &str, key: &str, ext: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(kind, key, ext);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir).stage("cache")?;
        let tmp = dir.join(format!(
            ".{key}.{ext}.{:?}.tmp",
            std::thread::current().id()
        ));
        std::fs::write(&tmp, bytes).stage("cache")?;
        std::fs::rename(&tmp, &path).stage("cache")?;
        Ok(())
    }
}
