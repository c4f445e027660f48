//! The slide database: an append-only JSON-lines file. Each line is one
//! [`CatalogEntry`]; the last line for a slide id is its current state.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use vslide_core::container::SlideReader;
use vslide_core::Execution;
use vslide_remote::{ReaderPool, SlideCatalog};

use crate::error::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideStatus {
    Scanning,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub slide_id: String,
    pub path: PathBuf,
    /// Unix time in milliseconds when the scan started.
    pub created_at: u64,
    pub status: SlideStatus,
}

pub fn unix_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Catalog {
    path: PathBuf,
    /// Serializes appends and check-then-append sequences.
    guard: Mutex<()>,
    /// Parsed entries and the file length they were read at. The file only
    /// grows, so an unchanged length means nothing new was appended.
    parsed: Mutex<Option<(u64, Vec<CatalogEntry>)>>,
    readers: ReaderPool,
}

impl Catalog {
    /// Opens `path`, creating an empty catalog if it does not exist.
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Catalog {
            path,
            guard: Mutex::new(()),
            parsed: Mutex::new(None),
            readers: ReaderPool::new(Execution::default()),
        })
    }

    /// Opens slides through `pool` from now on.
    pub fn with_pool(mut self, pool: ReaderPool) -> Self {
        self.readers = pool;
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append_locked(&self, entry: &CatalogEntry) -> io::Result<()> {
        let mut line = serde_json::to_vec(entry).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        // one write per record keeps lines whole even across processes
        f.write_all(&line)?;
        f.sync_data()
    }

    pub fn append(&self, entry: &CatalogEntry) -> io::Result<()> {
        let _g = self.guard.lock().unwrap();
        self.append_locked(entry)
    }

    /// Appends `entry` unless its slide id is already scanning or complete.
    pub fn register(&self, entry: &CatalogEntry) -> Result<(), IngestError> {
        let _g = self.guard.lock().unwrap();
        if let Some(e) = self.query(&entry.slide_id)? {
            if e.status != SlideStatus::Failed {
                return Err(IngestError::Conflict(entry.slide_id.clone()));
            }
        }
        Ok(self.append_locked(entry)?)
    }

    /// Current state of every slide, sorted by id. Lines that do not parse
    /// (a record torn by a crash) are skipped.
    pub fn entries(&self) -> io::Result<Vec<CatalogEntry>> {
        let mut parsed = self.parsed.lock().unwrap();
        let file = File::open(&self.path)?;
        let len = file.metadata()?.len();
        if let Some((at, entries)) = parsed.as_ref() {
            if *at == len {
                return Ok(entries.clone());
            }
        }
        let mut latest = std::collections::BTreeMap::new();
        let mut read = 0u64;
        for line in BufReader::new(file).lines() {
            let line = line?;
            read += line.len() as u64 + 1;
            if let Ok(e) = serde_json::from_str::<CatalogEntry>(&line) {
                latest.insert(e.slide_id.clone(), e);
            }
        }
        let entries: Vec<CatalogEntry> = latest.into_values().collect();
        // cache only what was read in full; a racing append re-reads next time
        if read == len {
            *parsed = Some((len, entries.clone()));
        }
        Ok(entries)
    }

    pub fn query(&self, slide_id: &str) -> io::Result<Option<CatalogEntry>> {
        Ok(self.entries()?.into_iter().find(|e| e.slide_id == slide_id))
    }
}

/// Serves complete slides only; scanning files are not finalized yet.
impl SlideCatalog for Catalog {
    fn list(&self) -> Vec<String> {
        self.entries()
            .unwrap_or_default()
            .into_iter()
            .filter(|e| e.status == SlideStatus::Complete)
            .map(|e| e.slide_id)
            .collect()
    }

    fn open(&self, slide_id: &str) -> vslide_core::Result<Option<Arc<SlideReader>>> {
        match self.query(slide_id)? {
            Some(e) if e.status == SlideStatus::Complete => self.readers.open(&e.path).map(Some),
            _ => Ok(None),
        }
    }
}
