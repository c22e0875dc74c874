use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{cache_key, Backend, BackendError, CompletionRequest, CompletionResponse, DecodingParams};
use crate::io::{write_atomic, IoError};

/// One cached completion, stored as `<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model_id: String,
    pub params: DecodingParams,
    pub prompt: String,
    pub text: String,
    pub timestamp: u64,
    /// Latency of the original call, replayed on hits.
    #[serde(default)]
    pub latency_ms: u64,
}

/// Append-only directory of content-addressed completions.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, IoError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| IoError::io(&dir, e))?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn lookup(&self, key: &str) -> Result<Option<CacheEntry>, IoError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => {
                let entry = serde_json::from_slice(&bytes).map_err(|source| IoError::Json {
                    path: path.clone(),
                    line: 1,
                    source,
                })?;
                Ok(Some(entry))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(IoError::io(&path, e)),
        }
    }

    /// Stores `entry` unless its key is already present. Concurrent stores
    /// of one key race on an atomic rename and leave a single file.
    pub fn store(&self, entry: &CacheEntry) -> Result<(), IoError> {
        let path = self.path_for(&entry.key);
        if path.exists() {
            return Ok(());
        }
        let bytes = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        write_atomic(&path, &bytes)
    }

    pub fn len(&self) -> Result<usize, IoError> {
        let rd = fs::read_dir(&self.dir).map_err(|e| IoError::io(&self.dir, e))?;
        Ok(rd
            .filter_map(Result::ok)
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count())
    }

    pub fn is_empty(&self) -> Result<bool, IoError> {
        Ok(self.len()? == 0)
    }
}

/// Serves repeated requests from a [`ResponseCache`].
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
}

impl<B: Backend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachedBackend { inner, cache }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

impl<B: Backend> Backend for CachedBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = cache_key(&req.params, &req.prompt.text);
        if let Some(hit) = self.cache.lookup(&key)? {
            let mut resp = CompletionResponse::new(req, hit.text, hit.latency_ms);
            resp.from_cache = true;
            return Ok(resp);
        }
        let resp = self.inner.complete(req)?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.cache.store(&CacheEntry {
            key,
            model_id: req.params.model_id.clone(),
            params: req.params.clone(),
            prompt: req.prompt.text.clone(),
            text: resp.text.clone(),
            timestamp,
            latency_ms: resp.latency_ms,
        })?;
        Ok(resp)
    }

    fn calls(&self) -> usize {
        self.inner.calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn entry(key: &str, text: &str) -> CacheEntry {
        CacheEntry {
            key: key.into(),
            model_id: "m".into(),
            params: DecodingParams::default(),
            prompt: "p".into(),
            text: text.into(),
            timestamp: 0,
            latency_ms: 0,
        }
    }

    #[test]
    fn store_then_lookup() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.lookup("abc").unwrap(), None);
        cache.store(&entry("abc", "Answer: A")).unwrap();
        assert_eq!(cache.lookup("abc").unwrap().unwrap().text, "Answer: A");
        // append-only: a second store of the key keeps the first text
        cache.store(&entry("abc", "Answer: B")).unwrap();
        assert_eq!(cache.lookup("abc").unwrap().unwrap().text, "Answer: A");
    }

    #[test]
    fn concurrent_stores_of_one_key_leave_one_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        std::thread::scope(|s| {
            for _ in 0..16 {
                let cache = Arc::clone(&cache);
                s.spawn(move || {
                    for _ in 0..20 {
                        cache.store(&entry("same", "Answer: A")).unwrap();
                    }
                });
            }
        });
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().filter_map(Result::ok).collect();
        assert_eq!(files.len(), 1, "{files:?}");
        assert_eq!(cache.lookup("same").unwrap().unwrap().text, "Answer: A");
    }
}
