//! Domain types of a virtual slide and the index arithmetic of its layouts.
//!
//! Three coordinate systems meet here: stage positions in micrometres,
//! slide pixels (stage position divided by the pixel pitch, shifted so the
//! mosaic origin is at zero), and mosaic indices `(r, c)` with their
//! linearised form `r * C + c`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::CodecChain;
use crate::error::{Error, Result};
use crate::spatial::Rect;

pub const MAX_COLOURS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MosaicShape {
    pub rows: u32,
    pub cols: u32,
}

impl MosaicShape {
    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        let shape = MosaicShape { rows, cols };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain(format!(
                "mosaic shape {}x{} must be at least 1x1",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shape of one field of view: `colours` planes of `height x width` u16 samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileShape {
    pub height: u32,
    pub width: u32,
    pub colours: u32,
}

impl TileShape {
    pub fn new(height: u32, width: u32, colours: u32) -> Result<Self> {
        let shape = TileShape {
            height,
            width,
            colours,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::domain("tile height and width must be >= 1"));
        }
        if self.colours == 0 || self.colours > MAX_COLOURS {
            return Err(Error::domain(format!(
                "colour count {} outside 1..={MAX_COLOURS}",
                self.colours
            )));
        }
        Ok(())
    }

    pub fn plane_samples(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn plane_bytes(&self) -> usize {
        self.plane_samples() * 2
    }

    /// Plane dimensions `(height, width)` at mip level `level`.
    pub fn level_dims(&self, level: u32) -> (u32, u32) {
        (self.height.div_ceil(level), self.width.div_ceil(level))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl StagePosition {
    pub fn new(x: f64, y: f64) -> Self {
        StagePosition { x, y, z: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldOfView {
    pub r: u32,
    pub c: u32,
    pub linear_index: u64,
    pub stage: StagePosition,
    /// Top-left corner in slide pixels, relative to the mosaic origin.
    pub pixel_origin: (i64, i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LayoutKind {
    /// One `(R*Nw*H, C*W)` dataset chunked by `(h, w)`.
    #[serde(alias = "packed2d")]
    Packed2d,
    /// One `(S*Nw*H, W)` dataset indexed by the storage ordinal of each fov.
    #[serde(alias = "linear")]
    Linear,
    /// A `(R, C, Nw, H, W)` dataset with one chunk per colour plane.
    #[serde(alias = "per_tile")]
    PerTile,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 3] = [
        LayoutKind::Packed2d,
        LayoutKind::Linear,
        LayoutKind::PerTile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::Packed2d => "PACKED2D",
            LayoutKind::Linear => "LINEAR",
            LayoutKind::PerTile => "PER_TILE",
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "PACKED2D" | "PACKED" => Ok(LayoutKind::Packed2d),
            "LINEAR" => Ok(LayoutKind::Linear),
            "PER_TILE" | "PERTILE" | "ND" => Ok(LayoutKind::PerTile),
            other => Err(Error::config(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkShape {
    pub h: u32,
    pub w: u32,
}

/// Colour selector for reads: one plane or every plane of a field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Colour {
    Index(u32),
    All,
}

impl Colour {
    /// Wire encoding; `0xFFFF_FFFF` selects every plane.
    pub fn to_wire(self) -> u32 {
        match self {
            Colour::Index(w) => w,
            Colour::All => u32::MAX,
        }
    }

    pub fn from_wire(w: u32) -> Self {
        if w == u32::MAX {
            Colour::All
        } else {
            Colour::Index(w)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideHeader {
    pub slide_id: String,
    /// Free-form acquisition attributes: strings, numbers and tuples thereof.
    pub attributes: BTreeMap<String, serde_json::Value>,
    pub mosaic: MosaicShape,
    pub tile: TileShape,
    /// Nanometres per slide pixel.
    pub pixel_pitch: f64,
    pub colour_names: Vec<String>,
    pub layout: LayoutKind,
    pub chunk: ChunkShape,
    pub codec_chain: CodecChain,
    pub mip_levels: Vec<u32>,
    pub fovs: Vec<FieldOfView>,
}

impl SlideHeader {
    /// A header for a dense mosaic laid out on a regular grid, with
    /// plane-sized chunks and no mip levels beyond 1.
    pub fn dense(
        slide_id: impl Into<String>,
        mosaic: MosaicShape,
        tile: TileShape,
        layout: LayoutKind,
        codec_chain: CodecChain,
    ) -> Result<Self> {
        let pitch = 162.5;
        let fovs = grid_fovs(mosaic, tile, 0.0, 0, pitch)?;
        let header = SlideHeader {
            slide_id: slide_id.into(),
            attributes: BTreeMap::new(),
            mosaic,
            tile,
            pixel_pitch: pitch,
            colour_names: (0..tile.colours).map(|w| format!("colour{w}")).collect(),
            layout,
            chunk: ChunkShape {
                h: tile.height,
                w: tile.width,
            },
            codec_chain,
            mip_levels: vec![1],
            fovs,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        if self.slide_id.is_empty() {
            return Err(Error::header("slide_id is empty"));
        }
        self.mosaic.validate()?;
        self.tile.validate()?;
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return Err(Error::header("pixel_pitch must be finite and > 0"));
        }
        if self.colour_names.len() != self.tile.colours as usize {
            return Err(Error::header(format!(
                "{} colour names for {} colours",
                self.colour_names.len(),
                self.tile.colours
            )));
        }
        for (k, v) in &self.attributes {
            if !is_attribute_value(v) {
                return Err(Error::header(format!(
                    "attribute `{k}` must be a string, number or tuple thereof"
                )));
            }
        }
        self.validate_chunk()?;
        self.codec_chain.validate()?;
        validate_mip_levels(&self.mip_levels)?;
        self.validate_fovs()
    }

    fn validate_chunk(&self) -> Result<()> {
        let ChunkShape { h, w } = self.chunk;
        let (hh, ww) = (self.tile.height, self.tile.width);
        match self.layout {
            LayoutKind::Packed2d => {
                if h == 0 || w == 0 || hh % h != 0 || ww % w != 0 || hh / h != ww / w {
                    return Err(Error::header(format!(
                        "chunk {h}x{w} must divide tile {hh}x{ww} by the same factor"
                    )));
                }
            }
            LayoutKind::Linear | LayoutKind::PerTile => {
                if (h, w) != (hh, ww) {
                    return Err(Error::header(format!(
                        "{} layout stores one plane per chunk; chunk must be {hh}x{ww}",
                        self.layout
                    )));
                }
            }
        }
        Ok(())
    }

    fn validate_fovs(&self) -> Result<()> {
        let cols = self.mosaic.cols;
        let mut prev: Option<u64> = None;
        for fov in &self.fovs {
            if fov.r >= self.mosaic.rows || fov.c >= cols {
                return Err(Error::header(format!(
                    "fov ({}, {}) outside mosaic",
                    fov.r, fov.c
                )));
            }
            if fov.linear_index != fov.r as u64 * cols as u64 + fov.c as u64 {
                return Err(Error::header(format!(
                    "fov ({}, {}) has linear index {}",
                    fov.r, fov.c, fov.linear_index
                )));
            }
            if prev.is_some_and(|p| p >= fov.linear_index) {
                return Err(Error::header("fov table must be strictly increasing"));
            }
            let s = fov.stage;
            if !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite()) || s.z != 0.0 {
                return Err(Error::header(format!(
                    "fov ({}, {}) stage position must be finite with z = 0",
                    fov.r, fov.c
                )));
            }
            prev = Some(fov.linear_index);
        }
        let origins = pixel_origins(self.fovs.iter().map(|f| f.stage), self.pixel_pitch);
        for (fov, origin) in self.fovs.iter().zip(origins) {
            if fov.pixel_origin != origin {
                return Err(Error::header(format!(
                    "fov ({}, {}) pixel origin {:?} disagrees with stage position ({:?})",
                    fov.r, fov.c, fov.pixel_origin, origin
                )));
            }
        }
        Ok(())
    }

    /// Number of stored fields of view (`S`).
    pub fn stored_fovs(&self) -> usize {
        self.fovs.len()
    }

    pub fn lookup(&self, r: u32, c: u32) -> Option<usize> {
        if r >= self.mosaic.rows || c >= self.mosaic.cols {
            return None;
        }
        sparse_lookup(&self.fovs, r as u64 * self.mosaic.cols as u64 + c as u64)
    }

    pub fn fov(&self, r: u32, c: u32) -> Option<&FieldOfView> {
        self.lookup(r, c).map(|i| &self.fovs[i])
    }

    /// Slide-pixel rectangle of every stored fov, paired with its linear index.
    pub fn fov_rects(&self) -> Vec<(Rect, u64)> {
        self.fovs
            .iter()
            .map(|f| (fov_bounds(f, &self.tile), f.linear_index))
            .collect()
    }

    /// Serialized form with sorted keys, as stored in the container and sent
    /// over the wire.
    pub fn to_canonical_json(&self) -> Result<Vec<u8>> {
        canonical_json(self)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let header: SlideHeader = serde_json::from_slice(bytes)?;
        header.validate()?;
        Ok(header)
    }
}

/// Serializes through `serde_json::Value`, whose maps are key-ordered.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_vec(&v)?)
}

fn is_attribute_value(v: &serde_json::Value) -> bool {
    use serde_json::Value;
    match v {
        Value::String(_) | Value::Number(_) => true,
        Value::Array(items) => items.iter().all(is_attribute_value),
        _ => false,
    }
}

pub fn validate_mip_levels(levels: &[u32]) -> Result<()> {
    if levels.first() != Some(&1) {
        return Err(Error::config("mip levels must start with 1"));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("mip levels must be strictly increasing"));
    }
    if let Some(bad) = levels.iter().find(|l| !l.is_power_of_two()) {
        return Err(Error::config(format!(
            "mip level {bad} is not a power of two"
        )));
    }
    Ok(())
}

/// Slide pixel pitch in nanometres for a camera pixel size (µm) and an
/// objective magnification.
pub fn pixel_pitch_from_optics(camera_pixel_um: f64, magnification: f64) -> Result<f64> {
    if !(camera_pixel_um > 0.0 && magnification > 0.0)
        || !camera_pixel_um.is_finite()
        || !magnification.is_finite()
    {
        return Err(Error::domain(
            "camera pixel size and magnification must be positive",
        ));
    }
    Ok(camera_pixel_um * 1000.0 / magnification)
}

pub fn linear_index(r: u32, c: u32, cols: u32) -> Result<u64> {
    if c >= cols {
        return Err(Error::domain(format!("column {c} outside 0..{cols}")));
    }
    Ok(r as u64 * cols as u64 + c as u64)
}

/// Inverse of [`linear_index`].
pub fn decompose_index(index: u64, cols: u32) -> (u32, u32) {
    ((index / cols as u64) as u32, (index % cols as u64) as u32)
}

/// Row range of the LINEAR dataset holding fields of view
/// `[lower_index, upper_index)`, where each fov spans `colours * height` rows.
pub fn linear_slab_rows(
    lower_index: u64,
    upper_index: u64,
    colours: u32,
    height: u32,
) -> (u64, u64) {
    debug_assert!(lower_index < upper_index);
    let step = colours as u64 * height as u64;
    (lower_index * step, upper_index * step)
}

/// First row of colour plane `w` of the `i`-th fov inside a slab.
pub fn plane_row_offset(i: u64, w: u32, colours: u32, height: u32) -> u64 {
    i * colours as u64 * height as u64 + w as u64 * height as u64
}

/// Storage ordinal of the entry with `linear_index` in a sorted fov table.
pub fn sparse_lookup(fovs: &[FieldOfView], linear_index: u64) -> Option<usize> {
    fovs.binary_search_by_key(&linear_index, |f| f.linear_index)
        .ok()
}

pub fn fov_bounds(fov: &FieldOfView, tile: &TileShape) -> Rect {
    let (x, y) = fov.pixel_origin;
    Rect::new(x, y, x + tile.width as i64, y + tile.height as i64)
}

/// Converts a stage coordinate (µm) to slide pixels, rounding half away from zero.
pub fn stage_to_pixels(um: f64, pitch_nm: f64) -> i64 {
    (um * 1000.0 / pitch_nm).round() as i64
}

/// Pixel origins of a set of stage positions relative to the mosaic origin
/// (the componentwise minimum).
pub fn pixel_origins(
    stages: impl IntoIterator<Item = StagePosition>,
    pitch_nm: f64,
) -> Vec<(i64, i64)> {
    let raw: Vec<(i64, i64)> = stages
        .into_iter()
        .map(|s| {
            (
                stage_to_pixels(s.x, pitch_nm),
                stage_to_pixels(s.y, pitch_nm),
            )
        })
        .collect();
    let min_x = raw.iter().map(|p| p.0).min().unwrap_or(0);
    let min_y = raw.iter().map(|p| p.1).min().unwrap_or(0);
    raw.into_iter()
        .map(|(x, y)| (x - min_x, y - min_y))
        .collect()
}

/// Builds the sorted fov table of a mosaic from recorded stage positions.
pub fn place_fovs(
    mosaic: MosaicShape,
    positions: impl IntoIterator<Item = (u32, u32, StagePosition)>,
    pitch_nm: f64,
) -> Result<Vec<FieldOfView>> {
    let mut entries: Vec<(u64, u32, u32, StagePosition)> = Vec::new();
    for (r, c, stage) in positions {
        if r >= mosaic.rows {
            return Err(Error::domain(format!("row {r} outside 0..{}", mosaic.rows)));
        }
        entries.push((linear_index(r, c, mosaic.cols)?, r, c, stage));
    }
    entries.sort_by_key(|e| e.0);
    if entries.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::domain("duplicate field of view position"));
    }
    let origins = pixel_origins(entries.iter().map(|e| e.3), pitch_nm);
    Ok(entries
        .into_iter()
        .zip(origins)
        .map(|((linear_index, r, c, stage), pixel_origin)| FieldOfView {
            r,
            c,
            linear_index,
            stage,
            pixel_origin,
        })
        .collect())
}

/// Pixel step between neighbouring tiles for a given overlap fraction.
pub fn grid_step(tile: TileShape, overlap: f64) -> (i64, i64) {
    (
        (tile.width as f64 * (1.0 - overlap)).round() as i64,
        (tile.height as f64 * (1.0 - overlap)).round() as i64,
    )
}

/// Stage positions of a serpentine-free row-major scan: neighbouring tiles
/// overlap by `overlap` of their size and row `r` is shifted by `r * shear_px`
/// pixels along x.
pub fn grid_stage_positions(
    mosaic: MosaicShape,
    tile: TileShape,
    overlap: f64,
    shear_px: i64,
    pitch_nm: f64,
) -> Vec<(u32, u32, StagePosition)> {
    let (sx, sy) = grid_step(tile, overlap);
    let um = |px: i64| px as f64 * pitch_nm / 1000.0;
    let mut out = Vec::with_capacity(mosaic.len() as usize);
    for r in 0..mosaic.rows {
        for c in 0..mosaic.cols {
            let x = c as i64 * sx + r as i64 * shear_px;
            let y = r as i64 * sy;
            out.push((r, c, StagePosition::new(um(x), um(y))));
        }
    }
    out
}

pub fn grid_fovs(
    mosaic: MosaicShape,
    tile: TileShape,
    overlap: f64,
    shear_px: i64,
    pitch_nm: f64,
) -> Result<Vec<FieldOfView>> {
    if !(0.0..0.5).contains(&overlap) {
        return Err(Error::domain(format!("overlap {overlap} outside [0, 0.5)")));
    }
    place_fovs(
        mosaic,
        grid_stage_positions(mosaic, tile, overlap, shear_px, pitch_nm),
        pitch_nm,
    )
}
