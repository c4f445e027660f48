use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use vslide_core::compositor::{
    display_scale, Compositor, ContrastWindow, RenderOverrides, RenderParams, StatusVector, TileSource,
    ViewportRect, ZoomDirection, ZoomPolicy,
};
use vslide_core::cache::{CacheConfig, LocalSlideCache};
use vslide_core::container::open_slide;
use vslide_core::spatial::RTree;
use vslide_remote::{parse_slide_url, RemoteSlide};

use crate::error::CliError;
use crate::{Ctx, Output};

#[derive(Debug, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderArgs {
    /// A VSF file or `vsp://host:port/slide-id`.
    source: String,
    /// Viewport in slide pixels [default: the mosaic bounds].
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    x1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    y1: Option<f64>,
    /// Output width [default: 1024].
    #[arg(long)]
    width: Option<usize>,
    /// Output height [default: keeps the viewport aspect].
    #[arg(long)]
    height: Option<usize>,
    /// Mip level [default: chosen from the display scale].
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Channel gates, e.g. 1,0,1.
    #[arg(long)]
    status: Option<String>,
    /// Contrast windows lo:hi, one per channel, comma separated.
    #[arg(long)]
    contrast: Option<String>,
    #[arg(long)]
    pipeline: Option<String>,
    /// Render parameters as JSON; the flags above take precedence.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    png: Option<PathBuf>,
}

fn parse_status(s: &str) -> Result<StatusVector, CliError> {
    s.split(',')
        .map(|t| match t.trim() {
            "1" | "on" | "true" => Ok(true),
            "0" | "off" | "false" => Ok(false),
            other => Err(CliError::usage(format!("--status: bad gate `{other}`"))),
        })
        .collect::<Result<Vec<_>, _>>()
        .map(StatusVector::new)
}

fn parse_contrast(s: &str) -> Result<Vec<ContrastWindow>, CliError> {
    s.split(',')
        .map(|t| {
            let bad = || CliError::usage(format!("--contrast: expected lo:hi, got `{t}`"));
            let (lo, hi) = t.trim().split_once(':').ok_or_else(bad)?;
            let lo = lo.parse().map_err(|_| bad())?;
            let hi = hi.parse().map_err(|_| bad())?;
            Ok(ContrastWindow::new(lo, hi)?)
        })
        .collect()
}

impl RenderArgs {
    /// Merged parameters, and whether the level was given explicitly.
    fn params(&self, nw: usize) -> Result<(RenderParams, bool), CliError> {
        let mut o: RenderOverrides = match &self.params {
            Some(p) => serde_json::from_str(p).map_err(|e| CliError::usage(format!("--params: {e}")))?,
            None => RenderOverrides::default(),
        };
        if let Some(s) = &self.status {
            o.status = Some(parse_status(s)?);
        }
        if let Some(c) = &self.contrast {
            o.contrast = Some(parse_contrast(c)?);
        }
        o.gamma = self.gamma.or(o.gamma);
        o.level = self.level.or(o.level);
        o.pipeline = self.pipeline.clone().or(o.pipeline);
        let explicit_level = o.level.is_some();
        Ok((o.apply(RenderParams::defaults(nw)), explicit_level))
    }
}

fn open(source: &str, cache: &CacheConfig) -> Result<Box<dyn TileSource>, CliError> {
    if source.starts_with("vsp://") {
        let (addr, id) =
            parse_slide_url(source).ok_or_else(|| CliError::usage(format!("bad slide URL `{source}`")))?;
        let remote = RemoteSlide::connect(addr.as_str(), &id).map_err(|e| CliError::from(e).context(source))?;
        return Ok(Box::new(remote));
    }
    let path = match &cache.local_dir {
        Some(d) => LocalSlideCache::new(d)?.localize(Path::new(source)).map_err(|e| CliError::from(e).context(source))?,
        None => PathBuf::from(source),
    };
    Ok(Box::new(open_slide(&path).map_err(|e| CliError::from(e).context(source))?))
}

pub fn run(ctx: &Ctx, flags: RenderArgs) -> Result<Output, CliError> {
    let args: RenderArgs = ctx.config.layered("render", &flags)?;
    let png = args.png.clone().ok_or_else(|| CliError::usage("render needs --png"))?;
    let t0 = Instant::now();
    let cache = ctx.config.cache()?;
    let source = open(&args.source, &cache)?;
    let header = source.header();
    let tree = RTree::build(header.fov_rects());
    let b = tree.bounds().ok_or_else(|| CliError::Data("slide has no fields of view".into()))?;
    let vp = ViewportRect::new(
        args.x0.unwrap_or(b.x0 as f64),
        args.x1.unwrap_or(b.x1 as f64),
        args.y0.unwrap_or(b.y0 as f64),
        args.y1.unwrap_or(b.y1 as f64),
    )
    .map_err(|e| CliError::usage(e.to_string()))?;
    let width = args.width.unwrap_or(1024);
    let height = args
        .height
        .unwrap_or_else(|| ((width as f64) * vp.height() / vp.width()).round().max(1.0) as usize);
    if width == 0 || height == 0 {
        return Err(CliError::usage("output size must be positive"));
    }
    let nw = header.tile.colours as usize;
    let (mut params, explicit_level) = args.params(nw)?;
    let scale = display_scale(&vp, width);
    if !explicit_level {
        params.level = ZoomPolicy::with_levels(header.mip_levels.clone())?.choose_level(scale, ZoomDirection::In);
    }
    params.validate(nw).map_err(|e| CliError::usage(e.to_string()))?;

    let compositor = Compositor::new(&cache, ctx.exec);
    let img = compositor.render_viewport(source.as_ref(), &tree, &vp, width, height, &params)?;
    img.write_png(&png).map_err(|e| CliError::from(e).context(png.display()))?;
    Ok(json!({
        "source": args.source,
        "png": png,
        "width": width,
        "height": height,
        "viewport": vp,
        "scale": scale,
        "params": params,
        "seconds": t0.elapsed().as_secs_f64(),
    })
    .into())
}
