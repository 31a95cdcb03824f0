//! Shared memory: a TTL-bound key-value store for payloads passed between
//! the engine and workers. Keys look like `sm://<uuid>` and are never reused.
//! Payloads above the spill threshold live in `<root>/sm/<uuid>` when a
//! spill directory is configured.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use uuid::Uuid;

use crate::clock::{self, Clock};

pub const KEY_PREFIX: &str = "sm://";
pub const DEFAULT_MAX_SIZE: usize = 64 * 1024 * 1024;
pub const DEFAULT_SPILL_THRESHOLD: usize = 1024 * 1024;
pub const DEFAULT_TTL_MS: i64 = 24 * 60 * 60 * 1000;
pub const JSON: &str = "application/json";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("payload of {size} bytes exceeds the {max} byte limit")]
    PayloadTooLarge { size: usize, max: usize },
    #[error("no entry for {0}")]
    NotFound(String),
    #[error("malformed key {0:?}")]
    InvalidKey(String),
    #[error("key {0} was already used")]
    KeyInUse(String),
    #[error("ttl must be positive")]
    InvalidTtl,
    #[error("spill i/o failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("payload is not valid JSON: {0}")]
    Decode(#[from] serde_json::Error),
}

impl MemoryError {
    pub fn code(&self) -> &'static str {
        match self {
            MemoryError::PayloadTooLarge { .. } => "payload-too-large",
            MemoryError::NotFound(_) => "not-found",
            MemoryError::InvalidKey(_) => "invalid-key",
            MemoryError::KeyInUse(_) => "key-in-use",
            MemoryError::InvalidTtl => "invalid-ttl",
            MemoryError::Io(_) => "storage",
            MemoryError::Decode(_) => "bad-request",
        }
    }
}

/// Parses `sm://<uuid>`; only the canonical lower-case hyphenated form is
/// accepted.
pub fn parse_key(key: &str) -> Result<Uuid, MemoryError> {
    key.strip_prefix(KEY_PREFIX)
        .and_then(|u| Uuid::parse_str(u).ok().filter(|p| p.hyphenated().to_string() == u))
        .ok_or_else(|| MemoryError::InvalidKey(key.to_string()))
}

pub fn is_key(key: &str) -> bool {
    parse_key(key).is_ok()
}

pub fn format_key(id: Uuid) -> String {
    format!("{KEY_PREFIX}{}", id.hyphenated())
}

#[derive(Debug)]
enum Payload {
    Inline(Arc<Vec<u8>>),
    Spilled(PathBuf),
}

#[derive(Debug)]
struct Entry {
    payload: Payload,
    content_type: String,
    expires_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fetched {
    pub payload: Vec<u8>,
    pub content_type: String,
    pub expires_at: i64,
}

#[derive(Debug)]
pub struct SharedMemory {
    entries: RwLock<HashMap<Uuid, Entry>>,
    issued: Mutex<HashSet<Uuid>>,
    spill_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    pub max_size: usize,
    pub spill_threshold: usize,
    pub default_ttl_ms: i64,
}

impl Default for SharedMemory {
    fn default() -> Self {
        Self::new(None, clock::system())
    }
}

impl SharedMemory {
    /// `root`, when given, hosts the `sm/` spill directory.
    pub fn new(root: Option<&Path>, clock: Arc<dyn Clock>) -> Self {
        Self {
            entries: RwLock::new(HashMap::new()),
            issued: Mutex::new(HashSet::new()),
            spill_dir: root.map(|r| r.join("sm")),
            clock,
            max_size: DEFAULT_MAX_SIZE,
            spill_threshold: DEFAULT_SPILL_THRESHOLD,
            default_ttl_ms: DEFAULT_TTL_MS,
        }
    }

    pub fn put(&self, payload: &[u8], content_type: &str, ttl_ms: Option<i64>) -> Result<String, MemoryError> {
        let id = {
            let mut issued = self.issued.lock();
            loop {
                let id = Uuid::new_v4();
                if issued.insert(id) {
                    break id;
                }
            }
        };
        self.store(id, payload, content_type, ttl_ms)?;
        Ok(format_key(id))
    }

    /// Stores under a caller-chosen key that has never been used before.
    pub fn put_at(&self, key: &str, payload: &[u8], content_type: &str, ttl_ms: Option<i64>) -> Result<(), MemoryError> {
        let id = parse_key(key)?;
        self.check(payload, ttl_ms)?;
        if !self.issued.lock().insert(id) {
            return Err(MemoryError::KeyInUse(key.to_string()));
        }
        self.store(id, payload, content_type, ttl_ms)
    }

    fn check(&self, payload: &[u8], ttl_ms: Option<i64>) -> Result<(), MemoryError> {
        if payload.len() > self.max_size {
            return Err(MemoryError::PayloadTooLarge { size: payload.len(), max: self.max_size });
        }
        if ttl_ms.is_some_and(|t| t <= 0) {
            return Err(MemoryError::InvalidTtl);
        }
        Ok(())
    }

    fn store(&self, id: Uuid, payload: &[u8], content_type: &str, ttl_ms: Option<i64>) -> Result<(), MemoryError> {
        self.check(payload, ttl_ms)?;
        let expires_at = self.clock.now_ms().saturating_add(ttl_ms.unwrap_or(self.default_ttl_ms));
        let payload = match &self.spill_dir {
            Some(dir) if payload.len() > self.spill_threshold => {
                fs::create_dir_all(dir)?;
                let path = dir.join(id.hyphenated().to_string());
                fs::write(&path, payload)?;
                Payload::Spilled(path)
            }
            _ => Payload::Inline(Arc::new(payload.to_vec())),
        };
        self.entries.write().insert(id, Entry { payload, content_type: content_type.to_string(), expires_at });
        Ok(())
    }

    /// Exact stored bytes. Expired entries read as missing even before a
    /// sweep removes them.
    pub fn get(&self, key: &str) -> Result<Fetched, MemoryError> {
        let id = parse_key(key)?;
        let now = self.clock.now_ms();
        let (payload, content_type, expires_at) = {
            let entries = self.entries.read();
            let e = entries.get(&id).filter(|e| e.expires_at >= now).ok_or_else(|| MemoryError::NotFound(key.to_string()))?;
            let payload = match &e.payload {
                Payload::Inline(b) => Ok(b.clone()),
                Payload::Spilled(p) => Err(p.clone()),
            };
            (payload, e.content_type.clone(), e.expires_at)
        };
        let payload = match payload {
            Ok(bytes) => bytes.as_ref().clone(),
            Err(path) => fs::read(path).map_err(|_| MemoryError::NotFound(key.to_string()))?,
        };
        Ok(Fetched { payload, content_type, expires_at })
    }

    pub fn delete(&self, key: &str) -> Result<(), MemoryError> {
        let id = parse_key(key)?;
        let entry = self.entries.write().remove(&id).ok_or_else(|| MemoryError::NotFound(key.to_string()))?;
        discard(entry);
        Ok(())
    }

    /// Removes entries with `expires_at < now`.
    pub fn sweep(&self, now: i64) -> usize {
        let expired: Vec<Entry> = {
            let mut entries = self.entries.write();
            let ids: Vec<Uuid> = entries.iter().filter(|(_, e)| e.expires_at < now).map(|(id, _)| *id).collect();
            ids.into_iter().filter_map(|id| entries.remove(&id)).collect()
        };
        let n = expired.len();
        expired.into_iter().for_each(discard);
        n
    }

    pub fn sweep_now(&self) -> usize {
        self.sweep(self.clock.now_ms())
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put_json<T: Serialize + ?Sized>(&self, value: &T) -> Result<String, MemoryError> {
        self.put(&serde_json::to_vec(value)?, JSON, None)
    }

    pub fn get_json<T: DeserializeOwned>(&self, key: &str) -> Result<T, MemoryError> {
        Ok(serde_json::from_slice(&self.get(key)?.payload)?)
    }
}

fn discard(entry: Entry) {
    if let Payload::Spilled(path) = entry.payload {
        let _ = fs::remove_file(path);
    }
}
