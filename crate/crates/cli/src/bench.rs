use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vslide_core::container::{bench_layouts, AccessPattern, BenchConfig};
use vslide_core::model::LayoutKind;
use vslide_ingest::{synth, ScanPlan};

use crate::error::CliError;
use crate::{Ctx, Output};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Where the bench files go [default: a temporary directory].
    #[arg(long)]
    dir: Option<PathBuf>,
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
    #[arg(long, value_delimiter = ',')]
    layouts: Vec<LayoutKind>,
    /// sequential and/or random.
    #[arg(long, value_delimiter = ',')]
    patterns: Vec<AccessPattern>,
    /// PACKED2D chunk is the tile divided by this.
    #[arg(long)]
    packed_divisor: Option<u32>,
    #[arg(long)]
    random_reads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(ctx: &Ctx, flags: BenchArgs) -> Result<Output, CliError> {
    let args: BenchArgs = ctx.config.layered("bench", &flags)?;
    let d = ScanPlan::default();
    let plan = ScanPlan {
        slide_id: "bench".into(),
        rows: args.rows.unwrap_or(d.rows),
        cols: args.cols.unwrap_or(d.cols),
        tile_width: args.tile_width.unwrap_or(d.tile_width),
        tile_height: args.tile_height.unwrap_or(d.tile_height),
        colours: args.colours.unwrap_or(d.colours),
        seed: args.seed.unwrap_or(d.seed),
        ..d
    };
    let template = plan.header()?;
    let tile = template.tile;

    let tmp;
    let dir = match &args.dir {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    let mut cfg = BenchConfig::new(&dir);
    cfg.exec = ctx.exec;
    if !args.layouts.is_empty() {
        cfg.layouts = args.layouts.clone();
    }
    if !args.patterns.is_empty() {
        cfg.patterns = args.patterns.clone();
    }
    cfg.packed_divisor = args.packed_divisor.unwrap_or(cfg.packed_divisor);
    cfg.random_reads = args.random_reads.unwrap_or(cfg.random_reads);
    cfg.seed = args.seed.unwrap_or(cfg.seed);

    let rows = bench_layouts(&cfg, &template, |f| synth::tile_planes(&plan, &tile, f))?;
    // every layout read the same pixels in the same order
    let digests_agree = cfg.patterns.iter().all(|p| {
        let mut ds = rows.iter().filter(|r| r.pattern == *p).map(|r| r.digest);
        let first = ds.next();
        ds.all(|d| Some(d) == first)
    });

    let mut t = String::new();
    let _ = writeln!(
        t,
        "{:<9} {:<16} {:>12} {:>8} {:>10} {:>10} {:>9} {:>9} {:>9}",
        "layout", "pattern", "file bytes", "chunks", "MiB/s", "mean ms", "p50 ms", "p95 ms", "write s"
    );
    for r in &rows {
        let _ = writeln!(
            t,
            "{:<9} {:<16} {:>12} {:>8} {:>10.1} {:>10.3} {:>9.3} {:>9.3} {:>9.3}",
            r.layout.name(),
            format!("{:?}", r.pattern),
            r.file_bytes,
            r.chunks_read,
            r.decoded_mib_per_s,
            r.latency.mean_ms,
            r.latency.p50_ms,
            r.latency.p95_ms,
            r.write_seconds
        );
    }
    let _ = write!(t, "digests agree: {digests_agree}");
    Ok(Output {
        json: json!({ "mosaic": template.mosaic, "tile": tile, "rows": rows, "digests_agree": digests_agree }),
        table: Some(t),
    })
}
