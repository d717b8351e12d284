use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsutil::{files_under, write_atomic};

/// Content hash of a stage's inputs and the configuration it reads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey(pub String);

pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(stage.as_bytes());
        Self(h)
    }

    pub fn json(mut self, value: &impl Serialize) -> Self {
        self.0.update(serde_json::to_vec(value).expect("cache key input serialises"));
        self.0.update([0]);
        self
    }

    /// Hashes a file's contents, or a marker if it does not exist.
    pub fn file(mut self, path: &Path) -> std::io::Result<Self> {
        self.0.update(path.to_string_lossy().as_bytes());
        match fs::read(path) {
            Ok(bytes) => self.0.update(Sha256::digest(&bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => self.0.update(b"<absent>"),
            Err(e) => return Err(e),
        }
        Ok(self)
    }

    /// Hashes every file under `dir` with its relative path.
    pub fn tree(mut self, dir: &Path) -> std::io::Result<Self> {
        for f in files_under(dir)? {
            self.0.update(f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().as_bytes());
            self.0.update(Sha256::digest(fs::read(&f)?));
        }
        self.0.update([1]);
        Ok(self)
    }

    pub fn finish(self) -> CacheKey {
        CacheKey(hex::encode(self.0.finalize()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    /// Output files relative to the run directory, with their content hashes.
    outputs: BTreeMap<PathBuf, String>,
}

/// Records which inputs produced which outputs, so unchanged stages can be skipped.
pub struct StageCache {
    out: PathBuf,
}

fn digest_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl StageCache {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    fn entry_path(&self, stage: &str) -> PathBuf {
        self.out.join(".cache").join(format!("{stage}.json"))
    }

    /// True when `stage` last ran with `key` and its outputs are still intact.
    pub fn is_fresh(&self, stage: &str, key: &CacheKey) -> bool {
        let Ok(text) = fs::read_to_string(self.entry_path(stage)) else {
            return false;
        };
        let Ok(entry) = serde_json::from_str::<Entry>(&text) else {
            return false;
        };
        entry.key == *key
            && entry
                .outputs
                .iter()
                .all(|(rel, hash)| digest_file(&self.out.join(rel)).is_ok_and(|h| h == *hash))
    }

    /// Records the outputs of a completed stage: files directly named and everything under named directories.
    pub fn store(&self, stage: &str, key: CacheKey, outputs: &[PathBuf]) -> std::io::Result<()> {
        let mut map = BTreeMap::new();
        for rel in outputs {
            let abs = self.out.join(rel);
            let files = if abs.is_dir() { files_under(&abs)? } else { vec![abs] };
            for f in files {
                let rel = f.strip_prefix(&self.out).unwrap_or(&f).to_path_buf();
                map.insert(rel, digest_file(&f)?);
            }
        }
        let entry = Entry { key, outputs: map };
        write_atomic(
            &self.entry_path(stage),
            serde_json::to_string_pretty(&entry).expect("cache entry serialises").as_bytes(),
        )
    }

    pub fn invalidate(&self, stage: &str) {
        let _ = fs::remove_file(self.entry_path(stage));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_until_inputs_or_outputs_change() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "a").unwrap();
        let key = || KeyBuilder::new("s").json(&3).file(&input).unwrap().finish();
        let cache = StageCache::new(dir.path());
        assert!(!cache.is_fresh("s", &key()));
        fs::write(dir.path().join("o.txt"), "x").unwrap();
        cache.store("s", key(), &[PathBuf::from("o.txt")]).unwrap();
        assert!(cache.is_fresh("s", &key()));
        fs::write(dir.path().join("o.txt"), "y").unwrap();
        assert!(!cache.is_fresh("s", &key()));
        fs::write(dir.path().join("o.txt"), "x").unwrap();
        fs::write(&input, "b").unwrap();
        assert!(!cache.is_fresh("s", &key()));
    }
}
