use std::sync::Arc;

use super::image::RgbImage;
use super::math::{
    apply_gamma, mix_corrected, normalize, quantize, RenderParams, ViewportRect, RAW_PIPELINE,
};
use super::mip::mignify;
use super::pipeline::PipelineRegistry;
use crate::cache::{
    prefetch, prefetch_set, CacheConfig, PrefetchHandle, TileCache, TileData, TileKey,
};
use crate::container::SlideReader;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{fov_bounds, sparse_lookup, Colour, FieldOfView, SlideHeader, MAX_COLOURS};
use crate::plane::Plane;
use crate::spatial::RTree;

/// Anything that can hand out decoded tiles: a local reader or a remote
/// client.
pub trait TileSource: Send + Sync {
    fn header(&self) -> &SlideHeader;

    /// Planes of fov `(r, c)` at a stored `level`; `None` for an absent fov.
    fn load_tile(&self, r: u32, c: u32, colour: Colour, level: u32) -> Result<Option<Vec<Plane>>>;
}

impl TileSource for SlideReader {
    fn header(&self) -> &SlideHeader {
        SlideReader::header(self)
    }

    fn load_tile(&self, r: u32, c: u32, colour: Colour, level: u32) -> Result<Option<Vec<Plane>>> {
        self.read_fov(r, c, colour, level)
    }
}

impl<T: TileSource + ?Sized> TileSource for Arc<T> {
    fn header(&self) -> &SlideHeader {
        (**self).header()
    }

    fn load_tile(&self, r: u32, c: u32, colour: Colour, level: u32) -> Result<Option<Vec<Plane>>> {
        (**self).load_tile(r, c, colour, level)
    }
}

/// Loads `level` from storage when present, otherwise mignifies level 1.
pub fn load_level<S: TileSource + ?Sized>(
    source: &S,
    r: u32,
    c: u32,
    colour: Colour,
    level: u32,
) -> Result<Option<Vec<Plane>>> {
    if source.header().mip_levels.contains(&level) {
        return source.load_tile(r, c, colour, level);
    }
    if !level.is_power_of_two() {
        return Err(Error::config(format!(
            "mip level {level} is not a power of two"
        )));
    }
    match source.load_tile(r, c, colour, 1)? {
        Some(planes) => planes
            .iter()
            .map(|p| mignify(p, level))
            .collect::<Result<_>>()
            .map(Some),
        None => Ok(None),
    }
}

fn tile_error(f: &FieldOfView, level: u32, e: Error) -> Error {
    match e {
        e @ Error::Tile { .. } => e,
        e => Error::Tile {
            r: f.r,
            c: f.c,
            level,
            source: Box::new(e),
        },
    }
}

/// Display pixels per slide pixel for an output of `out_width` columns.
pub fn display_scale(viewport: &ViewportRect, out_width: usize) -> f64 {
    out_width as f64 / viewport.width()
}

/// Renders viewports through a decoded-tile cache and a processed-tile
/// cache.
pub struct Compositor {
    tiles: Arc<TileCache>,
    textures: Arc<TileCache>,
    pipelines: PipelineRegistry,
    exec: Execution,
}

impl Compositor {
    pub fn new(cfg: &CacheConfig, exec: Execution) -> Self {
        Compositor {
            tiles: Arc::new(TileCache::new(cfg.tile_bytes)),
            textures: Arc::new(TileCache::new(cfg.tex_bytes)),
            pipelines: PipelineRegistry::with_builtins(),
            exec,
        }
    }

    pub fn with_pipelines(mut self, pipelines: PipelineRegistry) -> Self {
        self.pipelines = pipelines;
        self
    }

    pub fn pipelines(&self) -> &PipelineRegistry {
        &self.pipelines
    }

    pub fn tile_cache(&self) -> &Arc<TileCache> {
        &self.tiles
    }

    pub fn texture_cache(&self) -> &Arc<TileCache> {
        &self.textures
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    fn key(header: &SlideHeader, f: &FieldOfView, level: u32, pipeline: &str) -> TileKey {
        TileKey {
            slide_id: header.slide_id.clone(),
            r: f.r,
            c: f.c,
            colour: Colour::All,
            level,
            pipeline: pipeline.to_string(),
        }
    }

    /// Decoded planes of every colour of `f` at `level`, through the tile
    /// cache.
    pub fn raw_tile<S: TileSource + ?Sized>(
        &self,
        source: &S,
        f: &FieldOfView,
        level: u32,
    ) -> Result<Option<Arc<TileData>>> {
        let key = Self::key(source.header(), f, level, RAW_PIPELINE);
        let loaded = self.tiles.get_or_load(&key, || {
            match load_level(source, f.r, f.c, Colour::All, level) {
                Ok(Some(planes)) => Ok(TileData(planes)),
                Ok(None) => Err(None),
                Err(e) => Err(Some(tile_error(f, level, e))),
            }
        });
        match loaded {
            Ok(t) => Ok(Some(t)),
            Err(None) => Ok(None),
            Err(Some(e)) => Err(e),
        }
    }

    /// Planes of `f` after `pipeline`, through the texture cache (the raw
    /// pipeline reads the tile cache directly).
    pub fn processed_tile<S: TileSource + ?Sized>(
        &self,
        source: &S,
        f: &FieldOfView,
        level: u32,
        pipeline: &str,
    ) -> Result<Option<Arc<TileData>>> {
        if pipeline == RAW_PIPELINE {
            return self.raw_tile(source, f, level);
        }
        let p = self.pipelines.resolve(pipeline, level)?;
        let Some(raw) = self.raw_tile(source, f, level)? else {
            return Ok(None);
        };
        let key = Self::key(source.header(), f, level, pipeline);
        self.textures
            .get_or_load(&key, || {
                Ok::<_, Error>(TileData(raw.0.iter().map(|pl| p.apply(pl)).collect()))
            })
            .map(Some)
    }

    /// Renders `viewport` into an `out_width × out_height` RGB image.
    ///
    /// Output pixel `(i, j)` samples slide point
    /// `(x_inf + (j + 0.5)/W · width, y_inf + (i + 0.5)/H · height)` from the
    /// covering tile with the greatest linear index, nearest-neighbour in its
    /// level plane. Uncovered pixels are black.
    pub fn render_viewport<S: TileSource + ?Sized>(
        &self,
        source: &S,
        tree: &RTree,
        viewport: &ViewportRect,
        out_width: usize,
        out_height: usize,
        params: &RenderParams,
    ) -> Result<RgbImage> {
        viewport.validate()?;
        if out_width == 0 || out_height == 0 {
            return Err(Error::domain("output size must be at least 1x1"));
        }
        let header = source.header();
        let nw = header.tile.colours as usize;
        params.validate(nw)?;
        let level = params.level;
        let pipeline = self.pipelines.resolve(&params.pipeline, level)?;
        let params = pipeline
            .params_override(params)
            .unwrap_or_else(|| params.clone());

        let px: Vec<i64> = (0..out_width)
            .map(|j| {
                (viewport.x_inf + ((j as f64 + 0.5) / out_width as f64) * viewport.width()).floor()
                    as i64
            })
            .collect();
        let py: Vec<i64> = (0..out_height)
            .map(|i| {
                (viewport.y_inf + ((i as f64 + 0.5) / out_height as f64) * viewport.height())
                    .floor() as i64
            })
            .collect();

        let mut candidates: Vec<FieldOfView> = tree
            .query_intersect(&viewport.covering_rect())
            .into_iter()
            .filter_map(|id| sparse_lookup(&header.fovs, id).map(|i| header.fovs[i]))
            .collect();
        candidates.sort_unstable_by_key(|f| f.linear_index);

        // Painter order: later (greater linear index) tiles overwrite.
        const NONE: u32 = u32::MAX;
        let mut owner = vec![NONE; out_width * out_height];
        for (k, f) in candidates.iter().enumerate() {
            let b = fov_bounds(f, &header.tile);
            let (j0, j1) = (
                px.partition_point(|&x| x < b.x0),
                px.partition_point(|&x| x < b.x1),
            );
            let (i0, i1) = (
                py.partition_point(|&y| y < b.y0),
                py.partition_point(|&y| y < b.y1),
            );
            for i in i0..i1 {
                owner[i * out_width + j0..i * out_width + j1].fill(k as u32);
            }
        }
        // Only tiles that still own pixels after overdraw are fetched.
        let mut owns = vec![false; candidates.len()];
        for &o in &owner {
            if o != NONE {
                owns[o as usize] = true;
            }
        }
        let used: Vec<usize> = (0..candidates.len()).filter(|&k| owns[k]).collect();

        let fetched = self.exec.try_map(&used, |&k| {
            self.processed_tile(source, &candidates[k], level, &params.pipeline)
        })?;
        let mut tiles: Vec<Option<Arc<TileData>>> = vec![None; candidates.len()];
        for (&k, t) in used.iter().zip(fetched) {
            tiles[k] = t;
        }

        // gamma(normalize(v)) for every raw value of every enabled channel
        let luts: Vec<Vec<f64>> = (0..nw)
            .map(|w| {
                if !params.status.get(w) {
                    return Vec::new();
                }
                let win = params.contrast[w];
                (0..=u16::MAX)
                    .map(|v| apply_gamma(normalize(v, win), params.gamma))
                    .collect()
            })
            .collect();

        let (lh, lw) = header.tile.level_dims(level);
        let (lw, lh) = (lw as i64, lh as i64);
        let l = level as i64;
        let mut image = RgbImage::black(out_width, out_height);
        self.exec
            .for_each_row(image.data_mut(), out_width * 3, |i, row| {
                let mut corrected = [0.0f64; MAX_COLOURS as usize];
                for j in 0..out_width {
                    let k = owner[i * out_width + j];
                    if k == NONE {
                        continue;
                    }
                    let Some(tile) = &tiles[k as usize] else {
                        continue;
                    };
                    let (x0, y0) = candidates[k as usize].pixel_origin;
                    let lx = ((px[j] - x0) / l).min(lw - 1) as usize;
                    let ly = ((py[i] - y0) / l).min(lh - 1) as usize;
                    for (w, plane) in tile.0.iter().enumerate() {
                        corrected[w] = if luts[w].is_empty() {
                            0.0
                        } else {
                            luts[w][plane.get(ly, lx) as usize]
                        };
                    }
                    let rgb = mix_corrected(&params, &corrected[..nw]);
                    row[j * 3..j * 3 + 3].copy_from_slice(&rgb.map(quantize));
                }
            });
        Ok(image)
    }

    /// Starts loading the tiles around `viewport` (grown by `margin` tile
    /// sizes) into the tile cache without waiting.
    pub fn prefetch<S: TileSource + 'static>(
        &self,
        source: &Arc<S>,
        tree: &RTree,
        viewport: &ViewportRect,
        margin: f64,
        level: u32,
    ) -> PrefetchHandle {
        let header = source.header();
        let jobs = prefetch_set(tree, &viewport.covering_rect(), margin, &header.tile)
            .into_iter()
            .filter_map(|id| sparse_lookup(&header.fovs, id).map(|i| header.fovs[i]))
            .map(|f| {
                let key = Self::key(header, &f, level, RAW_PIPELINE);
                let source = source.clone();
                let load = move || match load_level(&*source, f.r, f.c, Colour::All, level) {
                    Ok(Some(planes)) => Ok(TileData(planes)),
                    Ok(None) => Err(Error::UnknownFov { r: f.r, c: f.c }),
                    Err(e) => Err(e),
                };
                (key, load)
            })
            .collect();
        prefetch(&self.tiles, jobs, self.exec)
    }
}

/// One-off render without a persistent cache.
pub fn render_viewport<S: TileSource + ?Sized>(
    source: &S,
    tree: &RTree,
    viewport: &ViewportRect,
    out_width: usize,
    out_height: usize,
    params: &RenderParams,
) -> Result<RgbImage> {
    let cfg = CacheConfig {
        tile_bytes: 0,
        tex_bytes: 0,
        local_dir: None,
    };
    Compositor::new(&cfg, Execution::default())
        .render_viewport(source, tree, viewport, out_width, out_height, params)
}
