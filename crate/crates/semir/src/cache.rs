//! Persistent cache of raw perspective scores.
//!
//! Entries are keyed by scorer id and the SHA-256 digests of the query and
//! sentence texts, so a cache is only valid for scorers whose output depends on
//! the texts alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use semir_core::scorers::{PerspectiveScorer, ScorePair, ScorerKind};
use semir_core::ScoreError;

use crate::error::Result;
use crate::io::write_atomic;

pub fn sha256_hex(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub scorer_id: String,
    pub query_hash: String,
    pub sentence_hash: String,
}

impl CacheKey {
    pub fn new(scorer_id: &str, query: &str, sentence: &str) -> Self {
        Self { scorer_id: scorer_id.into(), query_hash: sha256_hex(query), sentence_hash: sha256_hex(sentence) }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    #[serde(flatten)]
    key: CacheKey,
    raw: f64,
}

#[derive(Debug, Default)]
pub struct ScoreCache {
    entries: BTreeMap<CacheKey, f64>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads `path` if it exists. An unreadable or corrupt file is reported
    /// and replaced by an empty cache; it is overwritten on the next save.
    pub fn open(path: &Path) -> Self {
        let mut cache = Self { entries: BTreeMap::new(), path: Some(path.to_path_buf()) };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return cache,
            Err(e) => {
                log::warn!("score cache {}: {e}; starting empty", path.display());
                return cache;
            }
        };
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<CacheRecord>(line) {
                Ok(r) if r.raw.is_finite() => {
                    cache.entries.insert(r.key, r.raw);
                }
                _ => {
                    log::warn!("score cache {} is corrupt at line {}; starting empty", path.display(), n + 1);
                    cache.entries.clear();
                    return cache;
                }
            }
        }
        cache
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<f64> {
        self.entries.get(key).copied()
    }

    pub fn insert(&mut self, key: CacheKey, raw: f64) {
        self.entries.insert(key, raw);
    }

    /// Writes to the path given to [`ScoreCache::open`]; no-op for in-memory caches.
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let mut out = String::new();
        for (key, raw) in &self.entries {
            let rec = CacheRecord { key: key.clone(), raw: *raw };
            out.push_str(&serde_json::to_string(&rec).expect("cache records serialize"));
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Serves scores from a shared cache and forwards misses, in one batch, to
/// the wrapped scorer.
pub struct CachedScorer {
    inner: Arc<dyn PerspectiveScorer>,
    cache: Arc<Mutex<ScoreCache>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl CachedScorer {
    pub fn new(inner: Arc<dyn PerspectiveScorer>, cache: Arc<Mutex<ScoreCache>>) -> Self {
        Self { inner, cache, hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }
}

impl PerspectiveScorer for CachedScorer {
    fn scorer_id(&self) -> &str {
        self.inner.scorer_id()
    }

    fn kind(&self) -> ScorerKind {
        self.inner.kind()
    }

    fn raw_score(&self, pair: &ScorePair<'_>) -> Result<f64, ScoreError> {
        Ok(self.score_batch(std::slice::from_ref(pair))?[0])
    }

    fn score_batch(&self, pairs: &[ScorePair<'_>]) -> Result<Vec<f64>, ScoreError> {
        let id = self.inner.scorer_id();
        let keys: Vec<CacheKey> = pairs.iter().map(|p| CacheKey::new(id, p.query, p.sentence)).collect();
        let mut out: Vec<Option<f64>> = {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            keys.iter().map(|k| cache.get(k)).collect()
        };
        let missing: Vec<usize> = (0..pairs.len()).filter(|&i| out[i].is_none()).collect();
        self.hits.fetch_add((pairs.len() - missing.len()) as u64, Ordering::Relaxed);
        self.misses.fetch_add(missing.len() as u64, Ordering::Relaxed);
        if !missing.is_empty() {
            let batch: Vec<ScorePair<'_>> = missing.iter().map(|&i| pairs[i]).collect();
            let fresh = self.inner.score_batch(&batch)?;
            if fresh.len() != batch.len() {
                return Err(ScoreError::Protocol {
                    index: fresh.len().min(batch.len()),
                    message: format!("expected {} scores, got {}", batch.len(), fresh.len()),
                });
            }
            let kind = self.kind();
            let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            for (&i, v) in missing.iter().zip(fresh) {
                // out-of-range values are returned (and rejected by the caller) but never cached
                if kind.contains(v) {
                    cache.insert(keys[i].clone(), v);
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.unwrap_or_default()).collect())
    }
}
