use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;
use signal_hook::consts::{SIGINT, SIGTERM};

use vslide_ingest::{manager_serve, Catalog, SessionOptions, SlideManager};
use vslide_core::cache::LocalSlideCache;
use vslide_remote::{Gateway, GatewayConfig, ReaderPool, Server, ServerConfig, SlideCatalog, StaticCatalog};

use crate::error::CliError;
use crate::Ctx;

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeArgs {
    /// VSF files to serve, by slide id.
    slides: Vec<PathBuf>,
    /// VSP1 listen address [default: 127.0.0.1:7070].
    #[arg(long)]
    listen: Option<String>,
    /// Also run the HTTP gateway on this address.
    #[arg(long)]
    http: Option<String>,
    /// Serve the complete slides of this catalog instead of fixed files.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Accept START_SCAN and write new slides here (needs --catalog).
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Slide proxy capacity for scans started over the wire.
    #[arg(long)]
    capacity: Option<usize>,
    /// Largest accepted frame payload, bytes.
    #[arg(long)]
    max_frame: Option<u32>,
    /// HTTP worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

pub fn run(ctx: &Ctx, flags: ServeArgs, section: &str) -> Result<(), CliError> {
    let args: ServeArgs = ctx.config.layered(section, &flags)?;
    if section == "manager" && (args.catalog.is_none() || args.output_dir.is_none()) {
        return Err(CliError::usage("manager needs --catalog and --output-dir"));
    }
    if args.output_dir.is_some() && args.catalog.is_none() {
        return Err(CliError::usage("--output-dir needs --catalog"));
    }
    if args.catalog.is_some() == !args.slides.is_empty() {
        return Err(CliError::usage("give slide files or --catalog, not both or neither"));
    }
    let listen = args.listen.clone().unwrap_or_else(|| "127.0.0.1:7070".into());
    let cache = ctx.config.cache()?;
    let mut cfg = ServerConfig {
        cache: cache.clone(),
        exec: ctx.exec,
        ..ServerConfig::default()
    };
    if let Some(m) = args.max_frame {
        cfg.max_frame = m;
    }

    let pool = || -> Result<ReaderPool, CliError> {
        let p = ReaderPool::new(ctx.exec);
        Ok(match &cache.local_dir {
            Some(d) => p.with_local_cache(LocalSlideCache::new(d)?),
            None => p,
        })
    };

    let mut manager: Option<Arc<SlideManager>> = None;
    let server = match (&args.catalog, &args.output_dir) {
        (Some(cat), Some(out)) => {
            let opts = SessionOptions {
                capacity: args.capacity.unwrap_or(8),
                exec: ctx.exec,
                ..SessionOptions::default()
            };
            let (h, m) = manager_serve(listen.as_str(), Arc::new(Catalog::open(cat)?.with_pool(pool()?)), out, opts, cfg)?;
            manager = Some(m);
            h
        }
        (Some(cat), None) => {
            let catalog: Arc<dyn SlideCatalog> = Arc::new(Catalog::open(cat)?.with_pool(pool()?));
            Server::bind(listen.as_str(), catalog, cfg)?.spawn()?
        }
        (None, _) => {
            let catalog: Arc<dyn SlideCatalog> = Arc::new(StaticCatalog::from_paths(&args.slides)?.with_pool(pool()?));
            Server::bind(listen.as_str(), catalog, cfg)?.spawn()?
        }
    };
    let gateway = match &args.http {
        Some(addr) => {
            let gcfg = GatewayConfig {
                workers: args.workers.unwrap_or(GatewayConfig::default().workers),
                cache,
                exec: ctx.exec,
                ..GatewayConfig::default()
            };
            Some(Gateway::bind(addr.as_str(), server.addr(), gcfg)?.spawn()?)
        }
        None => None,
    };
    ctx.emit(
        &json!({
            "listen": server.addr().to_string(),
            "http": gateway.as_ref().map(|g| g.addr().to_string()),
            "scans": manager.is_some(),
        })
        .into(),
    );

    let stop = Arc::new(AtomicBool::new(false));
    signal_hook::flag::register(SIGTERM, stop.clone())?;
    signal_hook::flag::register(SIGINT, stop.clone())?;
    while !stop.load(Ordering::Relaxed) {
        std::thread::sleep(Duration::from_millis(50));
    }
    eprintln!("vslide: shutting down");
    if let Some(g) = gateway {
        g.shutdown();
    }
    server.shutdown();
    let sessions = manager.map(|m| m.wait_idle()).unwrap_or_default();
    let failed = sessions.iter().filter(|s| s.error.is_some()).count();
    ctx.emit(&json!({ "stopped": true, "sessions": sessions.len(), "failed_sessions": failed }).into());
    Ok(())
}
