//! Content-addressed response cache: one JSON file per request digest.
//!
//! Entries store the request fields next to the response text so a cache
//! directory can be inspected and diffed by hand. Writes go to a temporary
//! file in the same directory and are renamed into place, so concurrent
//! misses on one key converge on a single valid entry.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CacheKey, CompletionRequest, CompletionResponse, Provider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub provider_id: String,
    pub text: String,
}

impl CacheEntry {
    fn request(&self) -> CompletionRequest {
        CompletionRequest {
            model: self.model.clone(),
            system_prompt: self.system_prompt.clone(),
            user_prompt: self.user_prompt.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            top_k: self.top_k,
        }
    }
}

fn entry_path(dir: &Path, key: &CacheKey) -> PathBuf {
    dir.join(format!("{}.json", key.digest))
}

/// Reads an entry; anything unreadable or inconsistent with its own digest
/// counts as a miss.
fn read_entry(path: &Path, key: &CacheKey) -> Option<CacheEntry> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
        Err(e) => {
            log::warn!("cache entry {} unreadable ({e}); treating as miss", path.display());
            return None;
        }
    };
    match serde_json::from_slice::<CacheEntry>(&bytes) {
        Ok(entry) if entry.digest == key.digest && entry.request().cache_key() == *key => {
            Some(entry)
        }
        Ok(_) => {
            log::warn!("cache entry {} does not match its key; replacing", path.display());
            None
        }
        Err(e) => {
            log::warn!("cache entry {} is corrupt ({e}); replacing", path.display());
            None
        }
    }
}

fn write_entry(dir: &Path, entry: &CacheEntry) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let key = CacheKey {
        digest: entry.digest.clone(),
    };
    let path = entry_path(dir, &key);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let mut body = serde_json::to_vec_pretty(entry)?;
    body.push(b'\n');
    tmp.write_all(&body).map_err(|e| Error::io(&path, e))?;
    tmp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
    Ok(())
}

/// Returns the stored response on a hit; otherwise calls `provider` and
/// persists the result.
pub fn cached_complete<P: Provider + ?Sized>(
    provider: &P,
    request: &CompletionRequest,
    cache_dir: &Path,
) -> Result<CompletionResponse> {
    request.validate()?;
    let key = request.cache_key();
    if let Some(entry) = read_entry(&entry_path(cache_dir, &key), &key) {
        return Ok(CompletionResponse {
            text: entry.text,
            provider_id: entry.provider_id,
            cached: true,
        });
    }
    let response = provider.complete(request)?;
    let entry = CacheEntry {
        digest: key.digest,
        model: request.model.clone(),
        system_prompt: request.system_prompt.clone(),
        user_prompt: request.user_prompt.clone(),
        temperature: request.temperature,
        max_tokens: request.max_tokens,
        top_k: request.top_k,
        provider_id: response.provider_id.clone(),
        text: response.text.clone(),
    };
    write_entry(cache_dir, &entry)?;
    Ok(CompletionResponse {
        cached: false,
        ..response
    })
}

/// A provider that consults an on-disk cache before its inner provider.
pub struct CachedProvider<P> {
    inner: P,
    dir: PathBuf,
}

impl<P: Provider> CachedProvider<P> {
    pub fn new(inner: P, dir: impl Into<PathBuf>) -> Self {
        CachedProvider {
            inner,
            dir: dir.into(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl<P: Provider> Provider for CachedProvider<P> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        cached_complete(&self.inner, request, &self.dir)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting(AtomicUsize);

    impl Provider for Counting {
        fn id(&self) -> &str {
            "counting"
        }
        fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
            let n = self.0.fetch_add(1, Ordering::SeqCst);
            Ok(CompletionResponse {
                text: format!("{}#{n}", request.user_prompt),
                provider_id: "counting".into(),
                cached: false,
            })
        }
    }

    #[test]
    fn second_call_is_a_byte_identical_hit() {
        let dir = tempfile::tempdir().unwrap();
        let p = Counting(AtomicUsize::new(0));
        let req = CompletionRequest::new("m", "hello");
        let a = cached_complete(&p, &req, dir.path()).unwrap();
        let b = cached_complete(&p, &req, dir.path()).unwrap();
        assert!(!a.cached);
        assert!(b.cached);
        assert_eq!(a.text, b.text);
        assert_eq!(p.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn corrupt_entry_is_replaced() {
        let dir = tempfile::tempdir().unwrap();
        let p = Counting(AtomicUsize::new(0));
        let req = CompletionRequest::new("m", "hello");
        let path = entry_path(dir.path(), &req.cache_key());
        fs::write(&path, b"{ not json").unwrap();
        let a = cached_complete(&p, &req, dir.path()).unwrap();
        assert!(!a.cached);
        let stored: CacheEntry = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(stored.text, a.text);
        assert!(cached_complete(&p, &req, dir.path()).unwrap().cached);
    }

    #[test]
    fn tampered_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let p = Counting(AtomicUsize::new(0));
        let req = CompletionRequest::new("m", "hello");
        cached_complete(&p, &req, dir.path()).unwrap();
        let path = entry_path(dir.path(), &req.cache_key());
        let mut entry: CacheEntry = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        entry.user_prompt = "something else".into();
        fs::write(&path, serde_json::to_vec(&entry).unwrap()).unwrap();
        assert!(!cached_complete(&p, &req, dir.path()).unwrap().cached);
    }

    #[test]
    fn concurrent_misses_converge() {
        let dir = tempfile::tempdir().unwrap();
        let p = Counting(AtomicUsize::new(0));
        let req = CompletionRequest::new("m", "race");
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| cached_complete(&p, &req, dir.path()).unwrap());
            }
        });
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let path = entry_path(dir.path(), &req.cache_key());
        assert!(read_entry(&path, &req.cache_key()).is_some());
    }
}
