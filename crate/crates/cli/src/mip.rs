use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vslide_core::container::{open_slide, write_mip_levels};

use crate::error::CliError;
use crate::{Ctx, Output};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MipArgs {
    path: PathBuf,
    /// Levels to add, powers of two, e.g. 8,16.
    #[arg(long, value_delimiter = ',', required = true)]
    levels: Vec<u32>,
}

pub fn run(ctx: &Ctx, flags: MipArgs) -> Result<Output, CliError> {
    let args: MipArgs = ctx.config.layered("mip", &flags)?;
    let levels = write_mip_levels(&args.path, &args.levels, ctx.exec)
        .map_err(|e| CliError::from(e).context(args.path.display()))?;
    let r = open_slide(&args.path)?;
    let dims: Vec<_> = levels
        .iter()
        .map(|&l| {
            let (h, w) = r.header().tile.level_dims(l);
            json!({ "level": l, "tile_width": w, "tile_height": h })
        })
        .collect();
    Ok(json!({ "path": args.path, "levels": dims }).into())
}
