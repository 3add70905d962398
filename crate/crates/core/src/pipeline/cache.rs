//! Content-addressed stage cache.
//!
//! Every artifact lives at `<dir>/<stage>/<key>.<ext>`, where the key is the
//! SHA-256 of the stage name, its input artifacts and its configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Environment variable overriding the cache directory.
pub const CACHE_ENV: &str = "MESHLABEL_CACHE";

/// `$MESHLABEL_CACHE` if set and non-empty, else `<out_dir>/cache`.
pub fn default_cache_dir(out_dir: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => out_dir.join("cache"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey(pub String);

impl std::fmt::Display for CacheKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Incremental key derivation. Every field is length-prefixed so that
/// concatenations cannot collide.
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        KeyBuilder(Sha256::new()).bytes(stage.as_bytes())
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        self.0.update((data.len() as u64).to_le_bytes());
        self.0.update(data);
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn json<T: Serialize>(self, value: &T) -> Result<Self> {
        Ok(self.bytes(&serde_json::to_vec(value)?))
    }

    pub fn key(self, k: &CacheKey) -> Self {
        self.str(&k.0)
    }

    pub fn file(self, path: &Path) -> Result<Self> {
        Ok(self.bytes(&fs::read(path)?))
    }

    pub fn finish(self) -> CacheKey {
        CacheKey(self.0.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: BTreeMap<String, usize>,
    pub misses: BTreeMap<String, usize>,
}

impl CacheStats {
    pub fn total_hits(&self) -> usize {
        self.hits.values().sum()
    }

    pub fn total_misses(&self) -> usize {
        self.misses.values().sum()
    }
}

#[derive(Debug)]
pub struct StageCache {
    dir: PathBuf,
    stats: Mutex<CacheStats>,
}

impl StageCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(StageCache {
            dir,
            stats: Mutex::new(CacheStats::default()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, stage: &str, key: &CacheKey, ext: &str) -> PathBuf {
        self.dir.join(stage).join(format!("{key}.{ext}"))
    }

    /// Paths of the artifacts with extensions `exts`. When any is missing,
    /// `produce` writes all of them to the temporary paths it is given; they
    /// are then moved into place.
    pub fn get_or_create(
        &self,
        stage: &str,
        key: &CacheKey,
        exts: &[&str],
        produce: impl FnOnce(&[PathBuf]) -> Result<()>,
    ) -> Result<Vec<PathBuf>> {
        let finals: Vec<PathBuf> = exts.iter().map(|e| self.path(stage, key, e)).collect();
        let hit = finals.iter().all(|p| p.is_file());
        {
            let mut s = self.stats.lock().expect("cache stats poisoned");
            let counter = if hit { &mut s.hits } else { &mut s.misses };
            *counter.entry(stage.to_string()).or_default() += 1;
        }
        if hit {
            log::debug!("cache hit {stage}/{key}");
            return Ok(finals);
        }
        fs::create_dir_all(self.dir.join(stage))?;
        let temps: Vec<PathBuf> = exts
            .iter()
            .map(|e| self.dir.join(stage).join(format!(".tmp-{}-{key}.{e}", std::process::id())))
            .collect();
        let produced = produce(&temps);
        if let Err(e) = produced {
            for t in &temps {
                let _ = fs::remove_file(t);
            }
            return Err(e);
        }
        for (t, f) in temps.iter().zip(&finals) {
            fs::rename(t, f)?;
        }
        Ok(finals)
    }

    pub fn stats(&self) -> CacheStats {
        self.stats.lock().expect("cache stats poisoned").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_every_field() {
        let a = KeyBuilder::new("s").str("ab").str("c").finish();
        let b = KeyBuilder::new("s").str("a").str("bc").finish();
        let c = KeyBuilder::new("t").str("ab").str("c").finish();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, KeyBuilder::new("s").str("ab").str("c").finish());
        assert_eq!(a.0.len(), 64);
    }

    #[test]
    fn second_request_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path()).unwrap();
        let key = KeyBuilder::new("x").finish();
        let mut runs = 0;
        for _ in 0..2 {
            let p = cache
                .get_or_create("stage", &key, &["txt"], |t| {
                    runs += 1;
                    Ok(fs::write(&t[0], "hello")?)
                })
                .unwrap();
            assert_eq!(fs::read_to_string(&p[0]).unwrap(), "hello");
        }
        assert_eq!(runs, 1);
        let s = cache.stats();
        assert_eq!((s.total_hits(), s.total_misses()), (1, 1));
    }

    #[test]
    fn failed_production_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = StageCache::new(dir.path()).unwrap();
        let key = KeyBuilder::new("y").finish();
        let r = cache.get_or_create("stage", &key, &["a"], |t| {
            fs::write(&t[0], "partial")?;
            Err(crate::Error::Validation("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(fs::read_dir(dir.path().join("stage")).unwrap().count(), 0);
    }
}
