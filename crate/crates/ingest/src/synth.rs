//! Synthetic fluorescence-like content. Samples are a function of the slide
//! coordinate, so overlapping tiles agree on their shared strips. Values
//! stay within 12 bits like a scientific camera's.

use vslide_core::model::{grid_step, FieldOfView, TileShape};
use vslide_core::Plane;

use crate::plan::ScanPlan;

pub const MAX_SAMPLE: u16 = 4095;

/// Cells in the per-tile watermark, one bit of the linear index each.
pub const WATERMARK_BITS: usize = 16;

fn hash(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Sample of colour `colour` at slide pixel `(x, y)`: a diagonal ramp per
/// colour plus 6 bits of seeded noise.
pub fn sample(seed: u64, colour: u32, x: i64, y: i64) -> u16 {
    let ramp = (x * (colour as i64 + 1) + 2 * y + 500 * colour as i64).rem_euclid(2400);
    let key = seed ^ (colour as u64) << 56 ^ (x as u64).wrapping_mul(0x9E3779B97F4A7C15) ^ (y as u64).wrapping_mul(0xC2B2AE3D27D4EB4F);
    let noise = (hash(key) & 0x3F) as i64;
    (800 + ramp + noise).min(MAX_SAMPLE as i64) as u16
}

/// Top-left of the region no neighbour overlaps, and its end.
fn exclusive_region(tile: &TileShape, overlap: f64) -> ((usize, usize), (usize, usize)) {
    let (sx, sy) = grid_step(*tile, overlap);
    let (w, h) = (tile.width as i64, tile.height as i64);
    (((h - sy) as usize, (w - sx) as usize), (sy as usize, sx as usize))
}

/// Planes of one field of view: the coordinate pattern with the tile's
/// linear index written as a 4×4 bit block at the corner of the region no
/// neighbour overlaps, so overlap consistency is kept.
pub fn tile_planes(plan: &ScanPlan, tile: &TileShape, fov: &FieldOfView) -> Vec<Plane> {
    let (ox, oy) = fov.pixel_origin;
    let ((y0, x0), (y1, x1)) = exclusive_region(tile, plan.overlap);
    (0..tile.colours)
        .map(|w| {
            let mut p = Plane::from_fn(tile.height as usize, tile.width as usize, |y, x| {
                sample(plan.seed, w, ox + x as i64, oy + y as i64)
            });
            for b in 0..WATERMARK_BITS {
                let (y, x) = (y0 + b / 4, x0 + b % 4);
                if y < y1 && x < x1 {
                    let on = (fov.linear_index >> b) & 1 == 1;
                    p.set(y, x, if on { MAX_SAMPLE } else { 0 });
                }
            }
            p
        })
        .collect()
}

/// Reads back the watermark written by [`tile_planes`]; `None` when the
/// exclusive region is too small to hold it.
pub fn read_watermark(plane: &Plane, tile: &TileShape, overlap: f64) -> Option<u64> {
    let ((y0, x0), (y1, x1)) = exclusive_region(tile, overlap);
    if y1 < y0 + 4 || x1 < x0 + 4 {
        return None;
    }
    Some((0..WATERMARK_BITS).fold(0, |acc, b| {
        let on = plane.get(y0 + b / 4, x0 + b % 4) == MAX_SAMPLE;
        acc | (on as u64) << b
    }))
}
