#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use vslide_core::codec::CodecChain;
use vslide_core::container::SlideWriter;
use vslide_core::model::{ChunkShape, LayoutKind, MosaicShape, SlideHeader, TileShape};
use vslide_core::{Execution, Plane};
use vslide_remote::{Server, ServerConfig, ServerHandle, StaticCatalog};

pub const TILE: (u32, u32, u32) = (24, 32, 2);

pub fn planes(linear: u64) -> Vec<Plane> {
    (0..TILE.2 as u64)
        .map(|w| {
            Plane::from_fn(TILE.0 as usize, TILE.1 as usize, |y, x| {
                let n = ((y * 131 + x * 7) as u64 ^ (linear << 9) ^ (w << 17)).wrapping_mul(0x9E3779B97F4A7C15) >> 61;
                (((x * 40 + y * 90) as u64 + linear * 300 + w * 1000 + n) & 0x0FFF) as u16
            })
        })
        .collect()
}

/// 3×4 mosaic with fov 5 missing and mip levels {1, 2, 4}.
pub fn write_slide(dir: &Path, id: &str, layout: LayoutKind) -> PathBuf {
    let tile = TileShape::new(TILE.0, TILE.1, TILE.2).unwrap();
    let mut h = SlideHeader::dense(
        id,
        MosaicShape::new(3, 4).unwrap(),
        tile,
        layout,
        CodecChain::bitshuffle_deflate(),
    )
    .unwrap();
    if layout == LayoutKind::Packed2d {
        h.chunk = ChunkShape { h: 12, w: 16 };
    }
    h.fovs.retain(|f| f.linear_index != 5);
    h.mip_levels = vec![1, 2, 4];
    let path = dir.join(format!("{id}.vsf"));
    let mut w = SlideWriter::create(&path, h.clone(), Execution::Parallel).unwrap();
    for f in &h.fovs {
        w.write_fov(f.r, f.c, &planes(f.linear_index)).unwrap();
    }
    w.finalize().unwrap();
    path
}

/// One slide per layout: `linear`, `packed`, `pertile`.
pub fn serve_all(dir: &Path, cfg: ServerConfig) -> (ServerHandle, Vec<(String, PathBuf)>) {
    let slides: Vec<(String, PathBuf)> = [
        ("linear", LayoutKind::Linear),
        ("packed", LayoutKind::Packed2d),
        ("pertile", LayoutKind::PerTile),
    ]
    .into_iter()
    .map(|(id, l)| (id.to_string(), write_slide(dir, id, l)))
    .collect();
    let cat = StaticCatalog::from_paths(slides.iter().map(|(_, p)| p)).unwrap();
    let server = Server::bind("127.0.0.1:0", Arc::new(cat), cfg).unwrap();
    (server.spawn().unwrap(), slides)
}
