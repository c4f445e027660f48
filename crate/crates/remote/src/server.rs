//! The tile dealer: one worker thread per connection, strict request/reply
//! alternation, shared readers and caches.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufReader};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::SystemTime;

use vslide_core::cache::{CacheConfig, LocalSlideCache};
use vslide_core::compositor::{mignify, Compositor};
use vslide_core::container::{open_slide, SlideReader};
use vslide_core::model::{Colour, LayoutKind};
use vslide_core::{Error as CoreError, Execution, Plane};

use crate::protocol::{
    canonical, codes, encode_slab, parse, read_frame, write_frame, ErrorBody, Frame, HeaderRequest, ProtocolError,
    SlabRequest, TilePayload, TileRequest, DEFAULT_MAX_FRAME, GET_HEADER, GET_SLAB, GET_TILE, LIST, REPLY,
    START_SCAN,
};

/// Where the server finds slides.
pub trait SlideCatalog: Send + Sync {
    /// Ids of the slides that can be served, sorted.
    fn list(&self) -> Vec<String>;

    fn open(&self, slide_id: &str) -> vslide_core::Result<Option<Arc<SlideReader>>>;
}

/// Receives `START_SCAN` payloads; the reply body is returned verbatim.
pub trait ScanHandler: Send + Sync {
    fn start_scan(&self, request: &[u8]) -> Result<Vec<u8>, ErrorBody>;
}

/// Opened readers by path. A file whose size or modification time changed
/// (for example after mip levels were added) is reopened.
#[derive(Default)]
pub struct ReaderPool {
    readers: Mutex<HashMap<PathBuf, (u64, Option<SystemTime>, Arc<SlideReader>)>>,
    exec: Execution,
    local: Option<LocalSlideCache>,
}

impl ReaderPool {
    pub fn new(exec: Execution) -> Self {
        ReaderPool {
            readers: Mutex::new(HashMap::new()),
            exec,
            local: None,
        }
    }

    /// Copies each slide into `cache` before opening it.
    pub fn with_local_cache(mut self, cache: LocalSlideCache) -> Self {
        self.local = Some(cache);
        self
    }

    pub fn open(&self, path: &Path) -> vslide_core::Result<Arc<SlideReader>> {
        let meta = std::fs::metadata(path)?;
        let stamp = (meta.len(), meta.modified().ok());
        if let Some((len, mtime, r)) = self.readers.lock().unwrap().get(path) {
            if (*len, *mtime) == stamp {
                return Ok(r.clone());
            }
        }
        let reader = match &self.local {
            Some(cache) => open_slide(cache.localize(path)?)?,
            None => open_slide(path)?,
        };
        let reader = Arc::new(reader.with_execution(self.exec));
        self.readers
            .lock()
            .unwrap()
            .insert(path.to_path_buf(), (stamp.0, stamp.1, reader.clone()));
        Ok(reader)
    }
}

/// A fixed id → path map.
#[derive(Default)]
pub struct StaticCatalog {
    slides: BTreeMap<String, PathBuf>,
    pool: ReaderPool,
}

impl StaticCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, slide_id: impl Into<String>, path: impl Into<PathBuf>) {
        self.slides.insert(slide_id.into(), path.into());
    }

    /// Opens slides through `pool` from now on.
    pub fn with_pool(mut self, pool: ReaderPool) -> Self {
        self.pool = pool;
        self
    }

    /// Registers each file under the slide id stored in its header.
    pub fn from_paths<P: AsRef<Path>>(paths: impl IntoIterator<Item = P>) -> vslide_core::Result<Self> {
        let mut cat = Self::new();
        for p in paths {
            let r = cat.pool.open(p.as_ref())?;
            cat.insert(r.header().slide_id.clone(), p.as_ref());
        }
        Ok(cat)
    }
}

impl SlideCatalog for StaticCatalog {
    fn list(&self) -> Vec<String> {
        self.slides.keys().cloned().collect()
    }

    fn open(&self, slide_id: &str) -> vslide_core::Result<Option<Arc<SlideReader>>> {
        match self.slides.get(slide_id) {
            Some(p) => self.pool.open(p).map(Some),
            None => Ok(None),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub max_frame: u32,
    pub cache: CacheConfig,
    pub exec: Execution,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_frame: DEFAULT_MAX_FRAME,
            cache: CacheConfig::default(),
            exec: Execution::default(),
        }
    }
}

struct Shared {
    catalog: Arc<dyn SlideCatalog>,
    scan: Option<Arc<dyn ScanHandler>>,
    compositor: Compositor,
    max_frame: u32,
    shutdown: AtomicBool,
    conns: Mutex<HashMap<u64, TcpStream>>,
    next_conn: AtomicU64,
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, catalog: Arc<dyn SlideCatalog>, cfg: ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        Ok(Server {
            listener,
            shared: Arc::new(Shared {
                catalog,
                scan: None,
                compositor: Compositor::new(&cfg.cache, cfg.exec),
                max_frame: cfg.max_frame,
                shutdown: AtomicBool::new(false),
                conns: Mutex::new(HashMap::new()),
                next_conn: AtomicU64::new(0),
            }),
        })
    }

    /// Routes `START_SCAN` to `handler`; without one the request is
    /// answered with `unsupported`.
    pub fn with_scan_handler(mut self, handler: Arc<dyn ScanHandler>) -> Self {
        Arc::get_mut(&mut self.shared)
            .expect("configured before start")
            .scan = Some(handler);
        self
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.listener.local_addr()?;
        let shared = self.shared.clone();
        let thread = std::thread::Builder::new()
            .name("vsp-accept".into())
            .spawn(move || self.run())?;
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }

    /// Accepts connections until shut down.
    pub fn run(self) {
        for stream in self.listener.incoming() {
            if self.shared.shutdown.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let shared = self.shared.clone();
            let id = shared.next_conn.fetch_add(1, Ordering::Relaxed);
            if let Ok(clone) = stream.try_clone() {
                shared.conns.lock().unwrap().insert(id, clone);
            }
            let spawned = std::thread::Builder::new()
                .name(format!("vsp-conn-{id}"))
                .spawn(move || {
                    let _ = serve_connection(&shared, stream);
                    shared.conns.lock().unwrap().remove(&id);
                });
            if spawned.is_err() {
                self.shared.conns.lock().unwrap().remove(&id);
            }
        }
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes open connections and joins the accept loop.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shared.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        for (_, s) in self.shared.conns.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn serve_connection(shared: &Shared, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    loop {
        match read_frame(&mut reader, shared.max_frame) {
            Ok(None) => return Ok(()),
            Ok(Some(frame)) => write_frame(&mut writer, &handle(shared, frame))?,
            Err(ProtocolError::Io(e)) => return Err(e),
            Err(e) => {
                // framing is lost: report and hang up
                let _ = write_frame(&mut writer, &Frame::error(codes::BAD_REQUEST, e.to_string()));
                return Ok(());
            }
        }
    }
}

type Reply = Result<Vec<u8>, ErrorBody>;

fn err(code: &str, message: impl Into<String>) -> ErrorBody {
    ErrorBody {
        code: code.to_string(),
        message: message.into(),
    }
}

fn core_err(e: CoreError) -> ErrorBody {
    let code = match &e {
        CoreError::UnknownFov { .. } => codes::NOT_FOUND,
        CoreError::Unsupported(_) => codes::UNSUPPORTED,
        CoreError::Domain(_) | CoreError::Config(_) | CoreError::UnknownPipeline(_) => codes::BAD_REQUEST,
        CoreError::Tile { source, .. } => match **source {
            CoreError::Domain(_) | CoreError::Config(_) => codes::BAD_REQUEST,
            _ => codes::INTERNAL,
        },
        _ => codes::INTERNAL,
    };
    err(code, e.to_string())
}

fn proto_err(e: ProtocolError) -> ErrorBody {
    match e {
        ProtocolError::Codec(_) | ProtocolError::Malformed(_) => err(codes::BAD_REQUEST, e.to_string()),
        _ => err(codes::INTERNAL, e.to_string()),
    }
}

/// Answers one request frame.
fn handle(shared: &Shared, frame: Frame) -> Frame {
    let reply = match frame.msg_type {
        LIST => Ok(canonical(&shared.catalog.list())),
        GET_HEADER => get_header(shared, &frame.payload),
        GET_TILE => get_tile(shared, &frame.payload),
        GET_SLAB => get_slab(shared, &frame.payload),
        START_SCAN => match &shared.scan {
            Some(h) => h.start_scan(&frame.payload),
            None => Err(err(codes::UNSUPPORTED, "this server does not accept scans")),
        },
        other => Err(err(codes::BAD_REQUEST, format!("unknown message type {other:#04x}"))),
    };
    match reply {
        Ok(body) => Frame::new(frame.msg_type | REPLY, body),
        Err(e) => Frame::new(crate::protocol::ERROR, canonical(&e)),
    }
}

fn open(shared: &Shared, slide: &str) -> Result<Arc<SlideReader>, ErrorBody> {
    shared
        .catalog
        .open(slide)
        .map_err(core_err)?
        .ok_or_else(|| err(codes::NOT_FOUND, format!("unknown slide `{slide}`")))
}

fn get_header(shared: &Shared, payload: &[u8]) -> Reply {
    let req: HeaderRequest = parse(payload).map_err(proto_err)?;
    open(shared, &req.slide)?.header().to_canonical_json().map_err(core_err)
}

fn get_tile(shared: &Shared, payload: &[u8]) -> Reply {
    let req: TileRequest = parse(payload).map_err(proto_err)?;
    let reader = open(shared, &req.slide)?;
    let header = reader.header();
    let fov = *header
        .fov(req.r, req.c)
        .ok_or_else(|| err(codes::NOT_FOUND, format!("no field of view ({}, {})", req.r, req.c)))?;
    if let Colour::Index(w) = req.colour() {
        if w >= header.tile.colours {
            return Err(err(codes::BAD_REQUEST, format!("colour {w} outside 0..{}", header.tile.colours)));
        }
    }
    if req.level == 0 || !req.level.is_power_of_two() {
        return Err(err(codes::BAD_REQUEST, format!("level {} is not a power of two", req.level)));
    }
    let tile = shared
        .compositor
        .processed_tile(&reader, &fov, req.level, &req.pipeline)
        .map_err(core_err)?
        .ok_or_else(|| err(codes::NOT_FOUND, format!("no field of view ({}, {})", req.r, req.c)))?;
    let planes: &[Plane] = match req.colour() {
        Colour::All => &tile.0,
        Colour::Index(w) => std::slice::from_ref(&tile.0[w as usize]),
    };
    let p = TilePayload::encode(req.r, req.c, req.colour(), req.level, planes, req.codec).map_err(proto_err)?;
    Ok(p.to_bytes())
}

fn get_slab(shared: &Shared, payload: &[u8]) -> Reply {
    let req: SlabRequest = parse(payload).map_err(proto_err)?;
    let reader = open(shared, &req.slide)?;
    let header = reader.header();
    if header.layout != LayoutKind::Linear {
        return Err(err(
            codes::UNSUPPORTED,
            format!("slab reads need the LINEAR layout, slide is {}", header.layout),
        ));
    }
    if req.lower_index > req.upper_index {
        return Err(err(codes::BAD_REQUEST, "lower_index exceeds upper_index"));
    }
    if req.level == 0 || !req.level.is_power_of_two() {
        return Err(err(codes::BAD_REQUEST, format!("level {} is not a power of two", req.level)));
    }
    let planes = if header.mip_levels.contains(&req.level) {
        reader.read_slab(req.lower_index, req.upper_index, req.level)
    } else {
        reader
            .read_slab(req.lower_index, req.upper_index, 1)
            .and_then(|ps| ps.iter().map(|p| mignify(p, req.level)).collect())
    }
    .map_err(core_err)?;
    let nw = header.tile.colours as usize;
    let fovs = reader.slab_fovs(req.lower_index, req.upper_index);
    let payloads = fovs
        .iter()
        .zip(planes.chunks(nw))
        .map(|(f, ps)| TilePayload::encode(f.r, f.c, Colour::All, req.level, ps, req.codec))
        .collect::<Result<Vec<_>, _>>()
        .map_err(proto_err)?;
    Ok(encode_slab(&payloads))
}
