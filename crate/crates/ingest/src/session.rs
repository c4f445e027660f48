use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use vslide_core::container::SlideWriter;
use vslide_core::Execution;

use crate::catalog::{unix_millis, Catalog, CatalogEntry, SlideStatus};
use crate::error::IngestError;
use crate::plan::ScanPlan;
use crate::proxy::{proxy, ProxyReceiver};
use crate::scan::scan_sim;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Slide proxy size in tiles.
    pub capacity: usize,
    pub exec: Execution,
    /// Extra time the writer spends per tile, to model a slow disk.
    pub writer_delay: Duration,
    /// Fault injection: the scanner stops after this many tiles.
    pub abort_producer_after: Option<usize>,
    /// Fault injection: the writer fails on this tile.
    pub fail_writer_after: Option<usize>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            capacity: 8,
            exec: Execution::default(),
            writer_delay: Duration::ZERO,
            abort_producer_after: None,
            fail_writer_after: None,
        }
    }
}

/// When things happened, relative to the session start.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub started: Instant,
    pub producer_done: Duration,
    pub writer_done: Duration,
    pub emitted: usize,
    pub written: usize,
    /// Linear indices in the order the writer stored them.
    pub write_order: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub entry: CatalogEntry,
    pub timeline: Timeline,
    /// Why the session failed, if it did.
    pub error: Option<String>,
}

/// A registered scan that has not run yet.
pub struct Session {
    plan: ScanPlan,
    path: PathBuf,
    entry: CatalogEntry,
    catalog: Option<Arc<Catalog>>,
}

impl Session {
    /// Validates the plan and, with a catalog, registers the slide as
    /// scanning. Fails if the id is already scanning or complete.
    pub fn begin(plan: ScanPlan, path: impl Into<PathBuf>, catalog: Option<Arc<Catalog>>) -> Result<Self, IngestError> {
        plan.validate()?;
        let path = path.into();
        let path = std::path::absolute(&path).unwrap_or(path);
        let entry = CatalogEntry {
            slide_id: plan.slide_id.clone(),
            path: path.clone(),
            created_at: unix_millis(),
            status: SlideStatus::Scanning,
        };
        if let Some(c) = &catalog {
            c.register(&entry)?;
        }
        Ok(Session {
            plan,
            path,
            entry,
            catalog,
        })
    }

    pub fn entry(&self) -> &CatalogEntry {
        &self.entry
    }

    /// Scanner and writer run concurrently through the proxy. The file is
    /// finalized only when every tile arrived; otherwise it is left
    /// unfinalized and the entry is marked failed.
    pub fn run(self, opts: &SessionOptions) -> SessionReport {
        let start = Instant::now();
        let setup = proxy(opts.capacity).and_then(|q| Ok((q, self.plan.header()?)));
        let ((tx, rx), header) = match setup {
            Ok(v) => v,
            Err(e) => return self.finish(start, Duration::ZERO, Duration::ZERO, 0, Vec::new(), Some(e.to_string())),
        };
        let (scan, writer) = std::thread::scope(|s| {
            let path = &self.path;
            let writer = s.spawn(move || {
                let out = write_all(rx, header, path, opts);
                (out, start.elapsed())
            });
            let mut sent = 0usize;
            let scan = scan_sim(&self.plan, |t| {
                if opts.abort_producer_after == Some(sent) {
                    return Err("scanner stopped".to_string());
                }
                tx.send(t).map_err(|_| "slide writer stopped".to_string())?;
                sent += 1;
                Ok(())
            });
            let producer_done = start.elapsed();
            drop(tx);
            let writer = writer.join().expect("writer thread panicked");
            ((scan, producer_done, sent), writer)
        });
        let ((scan, producer_done, emitted), ((written, error), writer_done)) = (scan, writer);
        // the writer error is the root cause when both failed
        let error = error.or(scan.err().map(|e| e.to_string()));
        self.finish(start, producer_done, writer_done, emitted, written, error)
    }

    fn finish(
        mut self,
        started: Instant,
        producer_done: Duration,
        writer_done: Duration,
        emitted: usize,
        write_order: Vec<u64>,
        error: Option<String>,
    ) -> SessionReport {
        self.entry.status = if error.is_none() {
            SlideStatus::Complete
        } else {
            SlideStatus::Failed
        };
        let mut error = error;
        if let Some(c) = &self.catalog {
            if let Err(e) = c.append(&self.entry) {
                self.entry.status = SlideStatus::Failed;
                error.get_or_insert_with(|| format!("catalog update failed: {e}"));
            }
        }
        SessionReport {
            entry: self.entry,
            timeline: Timeline {
                started,
                producer_done,
                writer_done,
                emitted,
                written: write_order.len(),
                write_order,
            },
            error,
        }
    }
}

/// The slide writer: drains the proxy into a container file.
fn write_all(
    rx: ProxyReceiver,
    header: vslide_core::model::SlideHeader,
    path: &Path,
    opts: &SessionOptions,
) -> (Vec<u64>, Option<String>) {
    let mut order = Vec::new();
    let mut writer = match SlideWriter::create(path, header, opts.exec) {
        Ok(w) => w,
        Err(e) => return (order, Some(format!("cannot create {}: {e}", path.display()))),
    };
    for t in rx {
        if !opts.writer_delay.is_zero() {
            std::thread::sleep(opts.writer_delay);
        }
        if opts.fail_writer_after == Some(order.len()) {
            return (order, Some("slide writer failed".into()));
        }
        if let Err(e) = writer.write_fov(t.fov.r, t.fov.c, &t.planes) {
            return (order, Some(e.to_string()));
        }
        order.push(t.fov.linear_index);
    }
    let done = writer.finalize().err().map(|e| e.to_string());
    (order, done)
}

/// Runs one scan into `out`: [`Session::begin`] then [`Session::run`].
pub fn run_session(
    plan: &ScanPlan,
    out: impl AsRef<Path>,
    opts: &SessionOptions,
    catalog: Option<Arc<Catalog>>,
) -> Result<SessionReport, IngestError> {
    Ok(Session::begin(plan.clone(), out.as_ref(), catalog)?.run(opts))
}
