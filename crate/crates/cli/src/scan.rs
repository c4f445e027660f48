use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use vslide_core::codec::CodecChain;
use vslide_core::model::LayoutKind;
use vslide_ingest::{run_session, Catalog, ScanPlan, SessionOptions, SlideStatus};

use crate::error::CliError;
use crate::{Ctx, Output};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSimArgs {
    /// Output file [default: <slide-id>.vsf].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Catalog (JSON lines) to register the slide in.
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    slide_id: Option<String>,
    #[arg(long)]
    rows: Option<u32>,
    #[arg(long)]
    cols: Option<u32>,
    #[arg(long)]
    tile_width: Option<u32>,
    #[arg(long)]
    tile_height: Option<u32>,
    #[arg(long)]
    colours: Option<u32>,
    /// Fraction of a tile shared with each neighbour, in [0, 0.5).
    #[arg(long)]
    overlap: Option<f64>,
    /// Horizontal drift per mosaic row, pixels.
    #[arg(long, allow_hyphen_values = true)]
    shear_px: Option<i64>,
    /// Sample size on the specimen, nm.
    #[arg(long)]
    pixel_pitch: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tiles per second; 0 = as fast as the writer allows.
    #[arg(long)]
    rate: Option<f64>,
    /// packed2d, linear or per-tile.
    #[arg(long)]
    layout: Option<LayoutKind>,
    /// raw, deflate or bitshuffle+deflate.
    #[arg(long)]
    codec: Option<CodecChain>,
    /// Mip levels to store, e.g. 1,8,16.
    #[arg(long, value_delimiter = ',')]
    mip_levels: Option<Vec<u32>>,
    /// Slide proxy capacity in tiles.
    #[arg(long)]
    capacity: Option<usize>,
    /// Artificial per-tile writer delay, ms.
    #[arg(long)]
    writer_delay_ms: Option<u64>,
}

const SESSION_KEYS: [&str; 4] = ["out", "catalog", "capacity", "writer_delay_ms"];

/// The plan fields of the merged arguments over the plan defaults.
fn plan_of(args: &ScanSimArgs) -> Result<ScanPlan, CliError> {
    let Value::Object(mut m) = serde_json::to_value(args)? else {
        unreachable!("args serialize to an object")
    };
    m.retain(|k, v| !v.is_null() && !SESSION_KEYS.contains(&k.as_str()));
    Ok(serde_json::from_value(Value::Object(m))?)
}

pub fn run(ctx: &Ctx, flags: ScanSimArgs) -> Result<Output, CliError> {
    let args: ScanSimArgs = ctx.config.layered("scan-sim", &flags)?;
    let plan = plan_of(&args)?;
    plan.validate()?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.vsf", plan.slide_id)));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(CliError::Io(format!("{}: no such directory", parent.display())));
        }
    }
    let catalog = args.catalog.as_ref().map(Catalog::open).transpose()?.map(Arc::new);
    let opts = SessionOptions {
        capacity: args.capacity.unwrap_or(8),
        exec: ctx.exec,
        writer_delay: Duration::from_millis(args.writer_delay_ms.unwrap_or(0)),
        ..SessionOptions::default()
    };
    let rep = run_session(&plan, &out, &opts, catalog)?;
    let t = &rep.timeline;
    let json = json!({
        "entry": rep.entry,
        "tiles": plan.tile_count(),
        "emitted": t.emitted,
        "written": t.written,
        "producer_seconds": t.producer_done.as_secs_f64(),
        "writer_seconds": t.writer_done.as_secs_f64(),
        "error": rep.error,
    });
    if rep.entry.status != SlideStatus::Complete {
        // the report still goes to stdout for scripts
        println!("{json}");
        return Err(CliError::Data(rep.error.unwrap_or_else(|| "scan failed".into())));
    }
    Ok(json.into())
}
