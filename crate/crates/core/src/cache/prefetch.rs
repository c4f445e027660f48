use std::hash::Hash;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{LruCache, Weighted};
use crate::exec::Execution;
use crate::model::TileShape;
use crate::spatial::{RTree, Rect};

/// Ids of the tiles intersecting `viewport` grown by `margin` tile sizes on
/// every side, sorted.
pub fn prefetch_set(tree: &RTree, viewport: &Rect, margin: f64, tile: &TileShape) -> Vec<u64> {
    let dx = (margin.max(0.0) * tile.width as f64).round() as i64;
    let dy = (margin.max(0.0) * tile.height as f64).round() as i64;
    let mut ids = tree.query_intersect(&viewport.inflate(dx, dy));
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Tracks the background loads started by [`prefetch`].
#[derive(Clone)]
pub struct PrefetchHandle {
    pending: Arc<(Mutex<usize>, Condvar)>,
    scheduled: usize,
}

impl PrefetchHandle {
    /// Number of loads started (keys already cached are skipped).
    pub fn scheduled(&self) -> usize {
        self.scheduled
    }

    pub fn is_done(&self) -> bool {
        *self.pending.0.lock().unwrap() == 0
    }

    /// Blocks until every scheduled load finished or `timeout` elapsed;
    /// returns whether all finished.
    pub fn wait(&self, timeout: Duration) -> bool {
        let (lock, cv) = &*self.pending;
        let guard = lock.lock().unwrap();
        let (guard, _) = cv.wait_timeout_while(guard, timeout, |n| *n > 0).unwrap();
        *guard == 0
    }
}

/// Warms `cache` with `jobs` in the background and returns immediately.
/// Loads go through [`LruCache::get_or_load`], so they coalesce with
/// concurrent foreground requests; failures are ignored.
pub fn prefetch<K, V, E, F>(
    cache: &Arc<LruCache<K, V>>,
    jobs: Vec<(K, F)>,
    exec: Execution,
) -> PrefetchHandle
where
    K: Hash + Eq + Clone + Send + Sync + 'static,
    V: Weighted + Send + Sync + 'static,
    E: 'static,
    F: FnOnce() -> Result<V, E> + Send + 'static,
{
    let jobs: Vec<(K, F)> = jobs
        .into_iter()
        .filter(|(k, _)| !cache.contains(k))
        .collect();
    let pending = Arc::new((Mutex::new(jobs.len()), Condvar::new()));
    let scheduled = jobs.len();
    for (key, load) in jobs {
        let cache = cache.clone();
        let pending = pending.clone();
        exec.spawn(move || {
            let _ = cache.get_or_load(&key, load);
            let (lock, cv) = &*pending;
            *lock.lock().unwrap() -= 1;
            cv.notify_all();
        });
    }
    PrefetchHandle { pending, scheduled }
}
