use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// On-disk response cache: one `<key>.json` file per request digest holding
/// the raw provider response.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        // keys are hex digests; anything else would escape the directory
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric()) {
            return None;
        }
        Some(self.dir.join(format!("{key}.json")))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.path(key).is_some_and(|p| p.is_file())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let bytes = fs::read(self.path(key)?).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Writes through a temporary file and renames, so readers never see a
    /// partial entry.
    pub fn put(&self, key: &str, raw: &Value) -> io::Result<()> {
        let path = self
            .path(key)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "cache key must be alphanumeric"))?;
        let tmp = self.dir.join(format!(".{key}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(raw)?)?;
        fs::rename(tmp, path)
    }
}
