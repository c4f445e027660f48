use std::net::ToSocketAddrs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use vslide_remote::protocol::{canonical, codes, ErrorBody};
use vslide_remote::{ScanHandler, Server, ServerConfig, ServerHandle};

use crate::catalog::{Catalog, CatalogEntry};
use crate::error::IngestError;
use crate::plan::ScanPlan;
use crate::session::{Session, SessionOptions, SessionReport};

/// Starts one writer session per scan, each on its own threads with its
/// own proxy, and returns at once so the next scan can begin while earlier
/// writers drain.
pub struct SlideManager {
    catalog: Arc<Catalog>,
    output_dir: PathBuf,
    opts: SessionOptions,
    sessions: Mutex<Vec<JoinHandle<SessionReport>>>,
    active: Arc<AtomicUsize>,
}

impl SlideManager {
    pub fn new(catalog: Arc<Catalog>, output_dir: impl Into<PathBuf>, opts: SessionOptions) -> std::io::Result<Self> {
        let output_dir = output_dir.into();
        std::fs::create_dir_all(&output_dir)?;
        Ok(SlideManager {
            catalog,
            output_dir,
            opts,
            sessions: Mutex::new(Vec::new()),
            active: Arc::new(AtomicUsize::new(0)),
        })
    }

    /// Registers the slide and starts its session in the background.
    pub fn start(&self, plan: ScanPlan) -> Result<CatalogEntry, IngestError> {
        let path = self.output_dir.join(format!("{}.vsf", plan.slide_id));
        let session = Session::begin(plan, path, Some(self.catalog.clone()))?;
        let entry = session.entry().clone();
        let opts = self.opts.clone();
        let active = self.active.clone();
        active.fetch_add(1, Ordering::SeqCst);
        let handle = std::thread::Builder::new()
            .name(format!("session-{}", entry.slide_id))
            .spawn(move || {
                let report = session.run(&opts);
                active.fetch_sub(1, Ordering::SeqCst);
                report
            })?;
        self.sessions.lock().unwrap().push(handle);
        Ok(entry)
    }

    /// Sessions still running.
    pub fn active(&self) -> usize {
        self.active.load(Ordering::SeqCst)
    }

    /// Waits for every session started so far and returns their reports
    /// in start order.
    pub fn wait_idle(&self) -> Vec<SessionReport> {
        let handles: Vec<_> = self.sessions.lock().unwrap().drain(..).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("session thread panicked"))
            .collect()
    }
}

impl ScanHandler for SlideManager {
    fn start_scan(&self, request: &[u8]) -> Result<Vec<u8>, ErrorBody> {
        let fail = |code: &str, message: String| ErrorBody {
            code: code.to_string(),
            message,
        };
        let plan: ScanPlan =
            serde_json::from_slice(request).map_err(|e| fail(codes::BAD_REQUEST, format!("bad scan plan: {e}")))?;
        match self.start(plan) {
            Ok(entry) => Ok(canonical(&entry)),
            Err(e @ IngestError::Plan(_)) => Err(fail(codes::BAD_REQUEST, e.to_string())),
            Err(e @ IngestError::Conflict(_)) => Err(fail(codes::CONFLICT, e.to_string())),
            Err(e) => Err(fail(codes::INTERNAL, e.to_string())),
        }
    }
}

/// A tile dealer over `catalog` that also accepts `START_SCAN`.
pub fn manager_serve(
    listen: impl ToSocketAddrs,
    catalog: Arc<Catalog>,
    output_dir: impl Into<PathBuf>,
    opts: SessionOptions,
    cfg: ServerConfig,
) -> std::io::Result<(ServerHandle, Arc<SlideManager>)> {
    let manager = Arc::new(SlideManager::new(catalog.clone(), output_dir, opts)?);
    let server = Server::bind(listen, catalog, cfg)?.with_scan_handler(manager.clone());
    Ok((server.spawn()?, manager))
}
