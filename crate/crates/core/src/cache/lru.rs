use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};

/// Payload size accounting for the byte budget.
pub trait Weighted {
    fn weight(&self) -> usize;
}

impl Weighted for Vec<u8> {
    fn weight(&self) -> usize {
        self.len()
    }
}

struct Slot<V> {
    value: Arc<V>,
    size: usize,
    tick: u64,
}

struct Inner<K, V> {
    map: HashMap<K, Slot<V>>,
    /// recency tick -> key; the first entry is the least recently used
    order: BTreeMap<u64, K>,
    tick: u64,
    used: usize,
}

/// One in-flight load. Waiters block until the leader publishes; `None`
/// means the leader failed and waiters retry.
struct Latch<V> {
    state: Mutex<Option<Option<Arc<V>>>>,
    ready: Condvar,
}

impl<V> Latch<V> {
    fn new() -> Self {
        Latch {
            state: Mutex::new(None),
            ready: Condvar::new(),
        }
    }

    fn publish(&self, v: Option<Arc<V>>) {
        *self.state.lock().unwrap() = Some(v);
        self.ready.notify_all();
    }

    fn wait(&self) -> Option<Arc<V>> {
        let mut s = self.state.lock().unwrap();
        loop {
            if let Some(v) = s.as_ref() {
                return v.clone();
            }
            s = self.ready.wait(s).unwrap();
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
    pub used_bytes: usize,
    pub capacity_bytes: usize,
}

impl CacheStats {
    pub fn hit_ratio(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }
}

/// Thread-safe LRU cache bounded by the total weight of its values.
///
/// Concurrent [`get_or_load`](LruCache::get_or_load) calls for the same key
/// run the loader once; no lock is held while a loader runs.
pub struct LruCache<K, V> {
    capacity: usize,
    inner: Mutex<Inner<K, V>>,
    inflight: Mutex<HashMap<K, Arc<Latch<V>>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<K, V> LruCache<K, V>
where
    K: Hash + Eq + Clone,
    V: Weighted,
{
    pub fn new(capacity_bytes: usize) -> Self {
        LruCache {
            capacity: capacity_bytes,
            inner: Mutex::new(Inner {
                map: HashMap::new(),
                order: BTreeMap::new(),
                tick: 0,
                used: 0,
            }),
            inflight: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn used(&self) -> usize {
        self.inner.lock().unwrap().used
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        let inner = self.inner.lock().unwrap();
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            entries: inner.map.len(),
            used_bytes: inner.used,
            capacity_bytes: self.capacity,
        }
    }

    pub fn contains(&self, key: &K) -> bool {
        self.inner.lock().unwrap().map.contains_key(key)
    }

    /// Looks up `key`, refreshing its recency on a hit.
    pub fn get(&self, key: &K) -> Option<Arc<V>> {
        let mut inner = self.inner.lock().unwrap();
        let inner = &mut *inner;
        let slot = inner.map.get_mut(key)?;
        inner.order.remove(&slot.tick);
        inner.tick += 1;
        slot.tick = inner.tick;
        inner.order.insert(slot.tick, key.clone());
        Some(slot.value.clone())
    }

    /// Inserts `value`, evicting least recently used entries until the budget
    /// holds. Values heavier than the whole budget are not admitted; returns
    /// whether the value was stored.
    pub fn insert(&self, key: K, value: Arc<V>) -> bool {
        let size = value.weight();
        let mut inner = self.inner.lock().unwrap();
        let inner = &mut *inner;
        if let Some(old) = inner.map.remove(&key) {
            inner.order.remove(&old.tick);
            inner.used -= old.size;
        }
        if size > self.capacity {
            return false;
        }
        while inner.used + size > self.capacity {
            let (_, victim) = inner.order.pop_first().expect("used > 0 implies entries");
            let slot = inner.map.remove(&victim).expect("order and map agree");
            inner.used -= slot.size;
        }
        inner.tick += 1;
        let tick = inner.tick;
        inner.order.insert(tick, key.clone());
        inner.map.insert(key, Slot { value, size, tick });
        inner.used += size;
        true
    }

    pub fn remove(&self, key: &K) -> Option<Arc<V>> {
        let mut inner = self.inner.lock().unwrap();
        let slot = inner.map.remove(key)?;
        inner.order.remove(&slot.tick);
        inner.used -= slot.size;
        Some(slot.value)
    }

    pub fn clear(&self) {
        let mut inner = self.inner.lock().unwrap();
        inner.map.clear();
        inner.order.clear();
        inner.used = 0;
    }

    /// Returns the cached value for `key`, or runs `loader`, caches its
    /// output and returns it. Loader errors are returned and nothing is
    /// cached; requests that were waiting on a failed load retry.
    pub fn get_or_load<E, F>(&self, key: &K, loader: F) -> Result<Arc<V>, E>
    where
        F: FnOnce() -> Result<V, E>,
    {
        let mut loader = Some(loader);
        loop {
            if let Some(v) = self.get(key) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(v);
            }
            let (latch, leader) = {
                let mut inflight = self.inflight.lock().unwrap();
                match inflight.get(key) {
                    Some(l) => (l.clone(), false),
                    None => {
                        let l = Arc::new(Latch::new());
                        inflight.insert(key.clone(), l.clone());
                        (l, true)
                    }
                }
            };
            if !leader {
                if let Some(v) = latch.wait() {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    return Ok(v);
                }
                continue;
            }
            // A previous leader may have finished between our lookup and
            // registering the latch; values are cached before latches close.
            if let Some(v) = self.get(key) {
                self.finish(key, &latch, Some(v.clone()));
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(v);
            }
            self.misses.fetch_add(1, Ordering::Relaxed);
            let load = loader.take().expect("leader runs the loader once");
            return match load() {
                Ok(v) => {
                    let v = Arc::new(v);
                    self.insert(key.clone(), v.clone());
                    self.finish(key, &latch, Some(v.clone()));
                    Ok(v)
                }
                Err(e) => {
                    self.finish(key, &latch, None);
                    Err(e)
                }
            };
        }
    }

    fn finish(&self, key: &K, latch: &Latch<V>, v: Option<Arc<V>>) {
        self.inflight.lock().unwrap().remove(key);
        latch.publish(v);
    }
}
