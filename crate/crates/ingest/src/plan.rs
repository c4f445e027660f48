use serde::{Deserialize, Serialize};

use vslide_core::codec::CodecChain;
use vslide_core::model::{grid_fovs, grid_step, validate_mip_levels, LayoutKind, MosaicShape, SlideHeader, TileShape};

use crate::error::IngestError;

/// Everything needed to acquire one slide. Missing JSON fields take the
/// [`Default`] values: a 10×10 mosaic of 3-colour 256×208 tiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanPlan {
    pub slide_id: String,
    pub rows: u32,
    pub cols: u32,
    pub tile_height: u32,
    pub tile_width: u32,
    pub colours: u32,
    /// Fraction of a tile shared with each neighbour, in `[0, 0.5)`.
    pub overlap: f64,
    /// Horizontal drift of each row, pixels.
    pub shear_px: i64,
    /// Sample size on the specimen, nm.
    pub pixel_pitch: f64,
    pub seed: u64,
    /// Tiles per second; 0 emits as fast as the proxy accepts.
    pub rate: f64,
    pub layout: LayoutKind,
    pub codec: CodecChain,
    pub mip_levels: Vec<u32>,
}

impl Default for ScanPlan {
    fn default() -> Self {
        ScanPlan {
            slide_id: "scan".into(),
            rows: 10,
            cols: 10,
            tile_height: 208,
            tile_width: 256,
            colours: 3,
            overlap: 0.1,
            shear_px: 0,
            pixel_pitch: 162.5,
            seed: 0,
            rate: 0.0,
            layout: LayoutKind::Linear,
            codec: CodecChain::bitshuffle_deflate(),
            mip_levels: vec![1],
        }
    }
}

/// Slide ids double as file names.
fn valid_slide_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl ScanPlan {
    pub fn tile(&self) -> Result<TileShape, IngestError> {
        TileShape::new(self.tile_height, self.tile_width, self.colours).map_err(|e| IngestError::Plan(e.to_string()))
    }

    pub fn tile_count(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }

    /// Stage travel between neighbouring tiles (x, y), µm.
    pub fn stage_step_um(&self) -> Result<(f64, f64), IngestError> {
        let (sx, sy) = grid_step(self.tile()?, self.overlap);
        Ok((
            sx as f64 * self.pixel_pitch / 1000.0,
            sy as f64 * self.pixel_pitch / 1000.0,
        ))
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        self.header().map(|_| ())
    }

    /// The header of the slide this plan produces; fields of view in
    /// row-major acquisition order.
    pub fn header(&self) -> Result<SlideHeader, IngestError> {
        let plan_err = |e: vslide_core::Error| IngestError::Plan(e.to_string());
        if !valid_slide_id(&self.slide_id) {
            return Err(IngestError::Plan(format!(
                "slide id `{}` must be 1-128 characters of [A-Za-z0-9._-] not starting with '.'",
                self.slide_id
            )));
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(IngestError::Plan(format!("rate {} must be finite and >= 0", self.rate)));
        }
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return Err(IngestError::Plan(format!("pixel pitch {} must be positive", self.pixel_pitch)));
        }
        validate_mip_levels(&self.mip_levels).map_err(plan_err)?;
        let mosaic = MosaicShape::new(self.rows, self.cols).map_err(plan_err)?;
        let tile = self.tile()?;
        let mut h = SlideHeader::dense(&self.slide_id, mosaic, tile, self.layout, self.codec.clone()).map_err(plan_err)?;
        h.pixel_pitch = self.pixel_pitch;
        h.fovs = grid_fovs(mosaic, tile, self.overlap, self.shear_px, self.pixel_pitch).map_err(plan_err)?;
        h.mip_levels = self.mip_levels.clone();
        h.attributes.insert("source".into(), "scan-sim".into());
        h.attributes.insert("seed".into(), self.seed.into());
        h.attributes.insert("overlap".into(), self.overlap.into());
        h.attributes.insert("shear_px".into(), self.shear_px.into());
        h.validate().map_err(plan_err)?;
        Ok(h)
    }
}
