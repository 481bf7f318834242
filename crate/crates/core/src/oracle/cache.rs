use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use lru::LruCache;

use super::{GenerateRequest, Oracle, OracleInfo, ScoreRequest, ScoreResponse};
use crate::error::Result;
use crate::types::{Token, TokenId};

type GenerateKey = (Vec<TokenId>, usize, u64, u64);

/// LRU caches in front of `score` and `generate`, keyed on the full request.
///
/// Only successful responses are cached, so a cached oracle returns exactly
/// what the inner one would. Generation is assumed deterministic given the
/// request, seed included.
pub struct CachedOracle<O> {
    inner: O,
    scores: Mutex<LruCache<ScoreRequest, ScoreResponse>>,
    generations: Mutex<LruCache<GenerateKey, Vec<Token>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<O: Oracle> CachedOracle<O> {
    pub fn new(inner: O, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).unwrap();
        CachedOracle {
            inner,
            scores: Mutex::new(LruCache::new(cap)),
            generations: Mutex::new(LruCache::new(cap)),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    /// (hits, misses) so far.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}

impl<O: Oracle> Oracle for CachedOracle<O> {
    fn info(&self) -> Result<OracleInfo> {
        self.inner.info()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.inner.tokenize(text)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.inner.detokenize(ids)
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        if let Some(hit) = self.scores.lock().unwrap().get(req) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        // Concurrent misses on one key both reach the inner oracle; its
        // responses are deterministic so either insert is fine.
        let resp = self.inner.score(req)?;
        self.scores.lock().unwrap().put(req.clone(), resp.clone());
        Ok(resp)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        let key = (req.context.clone(), req.max_new_tokens, req.temperature.to_bits(), req.seed);
        if let Some(hit) = self.generations.lock().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let out = self.inner.generate(req)?;
        self.generations.lock().unwrap().put(key, out.clone());
        Ok(out)
    }
}

/// Counts score and generate requests passing through it.
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O: Oracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<O: Oracle> Oracle for CountingOracle<O> {
    fn info(&self) -> Result<OracleInfo> {
        self.inner.info()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.inner.tokenize(text)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.inner.detokenize(ids)
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(req)
    }

    fn generate(&self, req: &GenerateRequest) -> Result<Vec<Token>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.generate(req)
    }
}
