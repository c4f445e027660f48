use std::fmt::Write;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vslide_core::container::open_slide;

use crate::error::CliError;
use crate::{Ctx, Output};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoArgs {
    path: PathBuf,
    /// Decode every chunk and check its CRC.
    #[arg(long)]
    verify: bool,
}

pub fn run(ctx: &Ctx, flags: InfoArgs) -> Result<Output, CliError> {
    let args: InfoArgs = ctx.config.layered("info", &flags)?;
    let r = open_slide(&args.path).map_err(|e| CliError::from(e).context(args.path.display()))?;
    if args.verify {
        r.verify_all().map_err(|e| CliError::from(e).context(args.path.display()))?;
    }
    let h = r.header();
    let mut levels = Vec::new();
    for seg in r.segments() {
        let entries = r.entries(seg.level).unwrap_or_default();
        let stored: Vec<_> = entries.iter().filter(|e| !e.is_null()).collect();
        let compressed: u64 = stored.iter().map(|e| e.compressed_len).sum();
        let raw: u64 = stored.iter().map(|e| e.raw_len).sum();
        let (lh, lw) = h.tile.level_dims(seg.level);
        levels.push(json!({
            "level": seg.level,
            "tile_width": lw,
            "tile_height": lh,
            "chunks": entries.len(),
            "stored_chunks": stored.len(),
            "null_chunks": entries.len() - stored.len(),
            "compressed_bytes": compressed,
            "raw_bytes": raw,
            "ratio": if raw > 0 { compressed as f64 / raw as f64 } else { 0.0 },
        }));
    }
    let json = json!({
        "path": args.path,
        "file_bytes": r.file_len(),
        "verified": args.verify,
        "header": h,
        "levels": levels,
    });
    let mut t = String::new();
    let _ = writeln!(
        t,
        "{}  {} x {} fovs ({} stored), tile {}x{}x{}, {}, {}",
        h.slide_id,
        h.mosaic.rows,
        h.mosaic.cols,
        h.fovs.len(),
        h.tile.width,
        h.tile.height,
        h.tile.colours,
        h.layout,
        h.codec_chain
    );
    let _ = writeln!(t, "{:>6} {:>10} {:>8} {:>8} {:>14} {:>7}", "level", "tile", "chunks", "null", "bytes", "ratio");
    for l in &levels {
        let n = |k: &str| l[k].as_u64().unwrap_or(0);
        let _ = writeln!(
            t,
            "{:>6} {:>10} {:>8} {:>8} {:>14} {:>7.3}",
            n("level"),
            format!("{}x{}", n("tile_width"), n("tile_height")),
            n("chunks"),
            n("null_chunks"),
            n("compressed_bytes"),
            l["ratio"].as_f64().unwrap_or(0.0)
        );
    }
    Ok(Output {
        json,
        table: Some(t.trim_end().to_string()),
    })
}
