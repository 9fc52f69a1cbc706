//! Bounded LRU cache with per-entry expiry, keyed by claim fingerprints.

use std::num::NonZeroUsize;
use std::time::{Duration, Instant};

use lru::LruCache;
use parking_lot::Mutex;
use sha2::{Digest, Sha256};

use crate::claims::Claim;
use crate::text::normalize;

/// Hex SHA-256 of a claim's identity.
pub type Fingerprint = String;

/// Stable hash of subject, predicate, object, temporal qualifier and
/// complement. Surface wording and position do not matter.
pub fn claim_fingerprint(claim: &Claim) -> Fingerprint {
    let mut h = Sha256::new();
    let qualifier = claim
        .temporal_qualifier
        .map(|q| format!("{}-{}", q.from, q.to))
        .unwrap_or_default();
    for part in [
        claim.subject.lookup_key(),
        claim.predicate.clone(),
        claim.object.key(),
        qualifier,
        claim.complement_text().map(normalize).unwrap_or_default(),
    ] {
        h.update(part.as_bytes());
        h.update([0x1f]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Thread-safe LRU cache; entries expire after their own TTL.
pub struct TtlLruCache<V> {
    inner: Mutex<LruCache<String, (V, Instant)>>,
}

impl<V: Clone> TtlLruCache<V> {
    pub fn new(capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("non-zero");
        Self { inner: Mutex::new(LruCache::new(cap)) }
    }

    pub fn capacity(&self) -> usize {
        self.inner.lock().cap().get()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: &str, value: V, ttl: Duration) {
        self.put_at(key, value, ttl, Instant::now());
    }

    pub fn put_at(&self, key: &str, value: V, ttl: Duration, now: Instant) {
        self.inner.lock().put(key.to_string(), (value, now + ttl));
    }

    pub fn get(&self, key: &str) -> Option<V> {
        self.get_at(key, Instant::now())
    }

    /// Lookup as of `now`; expired entries are dropped.
    pub fn get_at(&self, key: &str, now: Instant) -> Option<V> {
        let mut guard = self.inner.lock();
        match guard.get(key) {
            Some((v, expiry)) if *expiry > now => Some(v.clone()),
            Some(_) => {
                guard.pop(key);
                None
            }
            None => None,
        }
    }

    pub fn clear(&self) {
        self.inner.lock().clear();
    }
}
