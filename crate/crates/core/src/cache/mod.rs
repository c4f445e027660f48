//! RAM tier of the tile storage hierarchy: a decoded-tile cache, a
//! processed-texture cache, a read-ahead prefetcher, and a local-directory
//! cache of whole slide files.

mod local;
mod lru;
mod prefetch;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use local::LocalSlideCache;
pub use lru::{CacheStats, LruCache, Weighted};
pub use prefetch::{prefetch, prefetch_set, PrefetchHandle};

use crate::model::Colour;
use crate::plane::Plane;

pub const DEFAULT_TILE_BYTES: usize = 512 << 20;
pub const DEFAULT_TEX_BYTES: usize = 256 << 20;

/// Cache and protocol addressing unit for one tile.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TileKey {
    pub slide_id: String,
    pub r: u32,
    pub c: u32,
    pub colour: Colour,
    pub level: u32,
    pub pipeline: String,
}

/// Decoded planes of one tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileData(pub Vec<Plane>);

impl Weighted for TileData {
    fn weight(&self) -> usize {
        self.0.iter().map(Plane::byte_len).sum()
    }
}

pub type TileCache = LruCache<TileKey, TileData>;

/// `cache.*` configuration keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub tile_bytes: usize,
    pub tex_bytes: usize,
    pub local_dir: Option<PathBuf>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            tile_bytes: DEFAULT_TILE_BYTES,
            tex_bytes: DEFAULT_TEX_BYTES,
            local_dir: None,
        }
    }
}
