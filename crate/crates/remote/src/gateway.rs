//! HTTP front end for browser viewers. Every request is answered from a
//! tile dealer through [`RemoteSlide`], so the gateway holds no slide files.
//!
//! Routes (all `GET`, CORS open):
//!
//! | path | reply |
//! |------|-------|
//! | `/slides` | JSON array of slide ids |
//! | `/slides/{id}/header` | header JSON |
//! | `/slides/{id}/render?x0&y0&x1&y1&w&h[&level][&pipeline][&params]` | PNG |
//! | `/slides/{id}/tile/{r}/{c}/{level}.png` | PNG of one field of view |
//!
//! `params` is a JSON object of render overrides (`contrast`, `status`,
//! `mixer`, `gamma`, `level`, `pipeline`); omitted fields keep defaults.

use std::collections::HashMap;
use std::io;
use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use tiny_http::{Header, Method, Request, Response};
use url::Url;

use vslide_core::cache::CacheConfig;
use vslide_core::compositor::{Compositor, RenderOverrides, RenderParams, TileSource, ViewportRect};
use vslide_core::model::fov_bounds;
use vslide_core::spatial::RTree;
use vslide_core::{Error as CoreError, Execution};

use crate::client::{Client, RemoteSlide};
use crate::protocol::{codes, ProtocolError};

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub workers: usize,
    /// Largest accepted `w * h` for a render.
    pub max_pixels: usize,
    pub cache: CacheConfig,
    pub exec: Execution,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            workers: 4,
            max_pixels: 16 << 20,
            cache: CacheConfig::default(),
            exec: Execution::default(),
        }
    }
}

struct Slide {
    remote: RemoteSlide,
    tree: RTree,
}

struct State {
    dealer: SocketAddr,
    slides: Mutex<HashMap<String, Arc<Slide>>>,
    compositor: Compositor,
    max_pixels: usize,
}

pub struct Gateway {
    http: Arc<tiny_http::Server>,
    state: Arc<State>,
    workers: usize,
}

impl Gateway {
    pub fn bind(addr: impl ToSocketAddrs, dealer: impl ToSocketAddrs, cfg: GatewayConfig) -> io::Result<Self> {
        let dealer = dealer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "dealer address resolves to nothing"))?;
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "listen address resolves to nothing"))?;
        let http = tiny_http::Server::http(addr).map_err(io::Error::other)?;
        Ok(Gateway {
            http: Arc::new(http),
            state: Arc::new(State {
                dealer,
                slides: Mutex::new(HashMap::new()),
                compositor: Compositor::new(&cfg.cache, cfg.exec),
                max_pixels: cfg.max_pixels,
            }),
            workers: cfg.workers.max(1),
        })
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        self.http.server_addr().to_ip()
    }

    pub fn spawn(self) -> io::Result<GatewayHandle> {
        let addr = self
            .local_addr()
            .ok_or_else(|| io::Error::other("gateway is not bound to an IP address"))?;
        let mut threads = Vec::new();
        for i in 0..self.workers {
            let http = self.http.clone();
            let state = self.state.clone();
            threads.push(
                std::thread::Builder::new()
                    .name(format!("http-{i}"))
                    .spawn(move || {
                        while let Ok(req) = http.recv() {
                            serve(&state, req);
                        }
                    })?,
            );
        }
        Ok(GatewayHandle {
            addr,
            http: self.http,
            threads,
        })
    }
}

pub struct GatewayHandle {
    addr: SocketAddr,
    http: Arc<tiny_http::Server>,
    threads: Vec<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in 0..self.threads.len() {
            self.http.unblock();
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

#[derive(Debug)]
struct HttpError {
    status: u16,
    message: String,
}

fn bad(message: impl Into<String>) -> HttpError {
    HttpError {
        status: 400,
        message: message.into(),
    }
}

fn not_found(message: impl Into<String>) -> HttpError {
    HttpError {
        status: 404,
        message: message.into(),
    }
}

impl From<ProtocolError> for HttpError {
    fn from(e: ProtocolError) -> Self {
        let status = match &e {
            ProtocolError::Remote { code, .. } if code == codes::NOT_FOUND => 404,
            ProtocolError::Remote { code, .. } if code == codes::BAD_REQUEST || code == codes::UNSUPPORTED => 400,
            _ => 502,
        };
        HttpError {
            status,
            message: e.to_string(),
        }
    }
}

impl From<CoreError> for HttpError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::Domain(_) | CoreError::Config(_) | CoreError::UnknownPipeline(_) => 400,
            CoreError::Tile { source, .. } => match &**source {
                CoreError::Source(s) => match s.downcast_ref::<ProtocolError>() {
                    Some(p) if p.is_remote(codes::BAD_REQUEST) => 400,
                    Some(_) => 502,
                    None => 500,
                },
                CoreError::Domain(_) | CoreError::Config(_) => 400,
                _ => 500,
            },
            _ => 500,
        };
        HttpError {
            status,
            message: e.to_string(),
        }
    }
}

enum Body {
    Json(Vec<u8>),
    Png(Vec<u8>),
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header")
}

fn serve(state: &State, req: Request) {
    let cors = [
        header("Access-Control-Allow-Origin", "*"),
        header("Access-Control-Allow-Methods", "GET, OPTIONS"),
        header("Access-Control-Allow-Headers", "Content-Type"),
    ];
    let response = match req.method() {
        Method::Options => Response::from_data(Vec::new()).with_status_code(204),
        Method::Get => match route(state, req.url()) {
            Ok(Body::Json(b)) => Response::from_data(b).with_header(header("Content-Type", "application/json")),
            Ok(Body::Png(b)) => Response::from_data(b).with_header(header("Content-Type", "image/png")),
            Err(e) => Response::from_data(serde_json::to_vec(&serde_json::json!({ "error": e.message })).unwrap())
                .with_status_code(e.status)
                .with_header(header("Content-Type", "application/json")),
        },
        _ => Response::from_data(Vec::new()).with_status_code(405),
    };
    let response = cors.into_iter().fold(response, |r, h| r.with_header(h));
    let _ = req.respond(response);
}

fn route(state: &State, raw_url: &str) -> Result<Body, HttpError> {
    let url = Url::parse("http://gateway")
        .and_then(|base| base.join(raw_url))
        .map_err(|e| bad(format!("bad url: {e}")))?;
    let segments: Vec<String> = url
        .path_segments()
        .map(|s| s.filter(|p| !p.is_empty()).map(|p| p.to_string()).collect())
        .unwrap_or_default();
    let query: HashMap<String, String> = url.query_pairs().into_owned().collect();
    let parts: Vec<&str> = segments.iter().map(String::as_str).collect();
    match parts.as_slice() {
        ["slides"] => {
            let ids = Client::connect(state.dealer)?.list()?;
            Ok(Body::Json(serde_json::to_vec(&ids).expect("strings serialize")))
        }
        ["slides", id, "header"] => Ok(Body::Json(Client::connect(state.dealer)?.header_json(id)?)),
        ["slides", id, "render"] => render(state, id, &query),
        ["slides", id, "tile", r, c, file] => {
            let level = file
                .strip_suffix(".png")
                .ok_or_else(|| not_found("tile paths end in .png"))?;
            tile(state, id, num(r, "r")?, num(c, "c")?, num(level, "level")?, &query)
        }
        _ => Err(not_found(format!("no route for {}", url.path()))),
    }
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, HttpError> {
    s.parse().map_err(|_| bad(format!("`{what}` must be a number, got `{s}`")))
}

fn query_num<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> Result<Option<T>, HttpError> {
    q.get(key).map(|v| num(v, key)).transpose()
}

fn required<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> Result<T, HttpError> {
    query_num(q, key)?.ok_or_else(|| bad(format!("missing query parameter `{key}`")))
}

fn slide(state: &State, id: &str) -> Result<Arc<Slide>, HttpError> {
    if let Some(s) = state.slides.lock().unwrap().get(id) {
        return Ok(s.clone());
    }
    let remote = RemoteSlide::connect(state.dealer, id)?;
    let tree = RTree::build(remote.header().fov_rects());
    let s = Arc::new(Slide { remote, tree });
    state.slides.lock().unwrap().insert(id.to_string(), s.clone());
    Ok(s)
}

/// Defaults for the slide, then `params` JSON, then the `level` and
/// `pipeline` query parameters.
fn params(q: &HashMap<String, String>, colours: usize) -> Result<RenderParams, HttpError> {
    let overrides: RenderOverrides = match q.get("params") {
        Some(p) => serde_json::from_str(p).map_err(|e| bad(format!("bad params: {e}")))?,
        None => RenderOverrides::default(),
    };
    let mut p = overrides.apply(RenderParams::defaults(colours));
    if let Some(level) = query_num(q, "level")? {
        p.level = level;
    }
    if let Some(id) = q.get("pipeline") {
        p.pipeline = id.clone();
    }
    p.validate(colours)?;
    Ok(p)
}

fn png(img: vslide_core::compositor::RgbImage) -> Result<Body, HttpError> {
    img.to_png().map(Body::Png).map_err(HttpError::from)
}

fn render(state: &State, id: &str, q: &HashMap<String, String>) -> Result<Body, HttpError> {
    let viewport = ViewportRect::new(
        required(q, "x0")?,
        required(q, "x1")?,
        required(q, "y0")?,
        required(q, "y1")?,
    )?;
    let (w, h): (usize, usize) = (required(q, "w")?, required(q, "h")?);
    if w.saturating_mul(h) > state.max_pixels {
        return Err(bad(format!("{w}x{h} exceeds the {} pixel limit", state.max_pixels)));
    }
    let s = slide(state, id)?;
    let p = params(q, s.remote.header().tile.colours as usize)?;
    png(state
        .compositor
        .render_viewport(&s.remote, &s.tree, &viewport, w, h, &p)?)
}

/// One field of view at `level`, one output pixel per level sample.
fn tile(state: &State, id: &str, r: u32, c: u32, level: u32, q: &HashMap<String, String>) -> Result<Body, HttpError> {
    let s = slide(state, id)?;
    let header = s.remote.header();
    let fov = *header
        .fov(r, c)
        .ok_or_else(|| not_found(format!("no field of view ({r}, {c})")))?;
    let mut p = params(q, header.tile.colours as usize)?;
    p.level = level;
    p.validate(header.tile.colours as usize)?;
    let bounds = fov_bounds(&fov, &header.tile);
    let tree = RTree::build(vec![(bounds, fov.linear_index)]);
    let (lh, lw) = header.tile.level_dims(level);
    png(state.compositor.render_viewport(
        &s.remote,
        &tree,
        &ViewportRect::from_rect(&bounds)?,
        lw as usize,
        lh as usize,
        &p,
    )?)
}
