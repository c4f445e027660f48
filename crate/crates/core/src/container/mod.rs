//! The `VSF1` virtual-slide container.
//!
//! ```text
//! "VSF1" | u32 header_len | header JSON (sorted keys, UTF-8)
//! chunk data ...
//! chunk index: N x { u64 offset, u64 compressed_len, u64 raw_len, u32 crc32 }
//! footer: u64 index_offset | u32 N | "VSFE"
//! ```
//!
//! Every integer is little-endian. The index is a flat table made of one
//! segment per mip level (in header order). Level 1 is a 2-D dataset whose
//! shape depends on the layout; each chunk of its chunk grid owns one index
//! slot in row-major order, and chunks that were never written (sparse
//! mosaics) have an all-zero entry. Levels above 1 store one chunk per
//! colour plane of each stored field of view.

mod bench;
mod reader;
mod writer;

use std::ops::Range;

pub use bench::{bench_layouts, AccessPattern, BenchConfig, BenchRow, LatencySummary};
pub use reader::{open_slide, ReadStats, SlideReader};
pub use writer::{create_slide, write_mip_levels, SlideWriter};

use crate::error::{Error, Result};
use crate::model::{LayoutKind, SlideHeader};
use crate::plane::Plane;

pub const MAGIC: [u8; 4] = *b"VSF1";
pub const FOOTER_MAGIC: [u8; 4] = *b"VSFE";
pub const ENTRY_LEN: usize = 28;
pub const FOOTER_LEN: usize = 16;
/// Upper bound accepted for the header JSON.
pub const MAX_HEADER_LEN: u32 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ChunkIndexEntry {
    pub offset: u64,
    pub compressed_len: u64,
    pub raw_len: u64,
    /// CRC-32 of the compressed bytes.
    pub crc32: u32,
}

impl ChunkIndexEntry {
    pub const NULL: ChunkIndexEntry = ChunkIndexEntry {
        offset: 0,
        compressed_len: 0,
        raw_len: 0,
        crc32: 0,
    };

    pub fn is_null(&self) -> bool {
        *self == Self::NULL
    }

    pub fn to_bytes(&self) -> [u8; ENTRY_LEN] {
        let mut b = [0u8; ENTRY_LEN];
        b[0..8].copy_from_slice(&self.offset.to_le_bytes());
        b[8..16].copy_from_slice(&self.compressed_len.to_le_bytes());
        b[16..24].copy_from_slice(&self.raw_len.to_le_bytes());
        b[24..28].copy_from_slice(&self.crc32.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Self {
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        ChunkIndexEntry {
            offset: u64_at(0),
            compressed_len: u64_at(8),
            raw_len: u64_at(16),
            crc32: u32::from_le_bytes(b[24..28].try_into().unwrap()),
        }
    }
}

/// Rectangular region `[rows) x [cols)` of a dataset, in dataset pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hyperslab {
    pub rows: Range<u64>,
    pub cols: Range<u64>,
}

impl Hyperslab {
    pub fn new(rows: Range<u64>, cols: Range<u64>) -> Self {
        Hyperslab { rows, cols }
    }

    pub fn height(&self) -> u64 {
        self.rows.end - self.rows.start
    }

    pub fn width(&self) -> u64 {
        self.cols.end - self.cols.start
    }
}

/// Location of a chunk: its mip level and ordinal inside that level's segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DatasetAddress {
    pub level: u32,
    pub ordinal: u64,
}

/// Shape and chunking of one 2-D dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetGeometry {
    pub rows: u64,
    pub cols: u64,
    pub chunk_rows: u64,
    pub chunk_cols: u64,
}

impl DatasetGeometry {
    pub fn grid(&self) -> (u64, u64) {
        (
            self.rows.div_ceil(self.chunk_rows),
            self.cols.div_ceil(self.chunk_cols),
        )
    }

    pub fn chunk_count(&self) -> u64 {
        let (r, c) = self.grid();
        r * c
    }

    pub fn ordinal(&self, chunk_row: u64, chunk_col: u64) -> u64 {
        chunk_row * self.grid().1 + chunk_col
    }

    pub fn chunk_raw_len(&self) -> u64 {
        self.chunk_rows * self.chunk_cols * 2
    }

    pub fn check(&self, slab: &Hyperslab) -> Result<()> {
        if slab.rows.start >= slab.rows.end
            || slab.cols.start >= slab.cols.end
            || slab.rows.end > self.rows
            || slab.cols.end > self.cols
        {
            return Err(Error::domain(format!(
                "hyperslab {:?} x {:?} outside dataset {}x{}",
                slab.rows, slab.cols, self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Chunk grid coordinates overlapping `slab`, row-major.
    pub fn overlapping(&self, slab: &Hyperslab) -> impl Iterator<Item = (u64, u64)> {
        let r0 = slab.rows.start / self.chunk_rows;
        let r1 = slab.rows.end.div_ceil(self.chunk_rows);
        let c0 = slab.cols.start / self.chunk_cols;
        let c1 = slab.cols.end.div_ceil(self.chunk_cols);
        (r0..r1).flat_map(move |r| (c0..c1).map(move |c| (r, c)))
    }
}

/// One level's run of entries inside the flat chunk index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub level: u32,
    pub base: u64,
    pub geometry: DatasetGeometry,
}

/// Dataset geometry of a level: the layout's dataset at level 1, and a
/// plane-chunked `(S*Nw*h_L, w_L)` dataset for mip levels.
pub fn level_geometry(header: &SlideHeader, level: u32) -> DatasetGeometry {
    let t = header.tile;
    let nw = t.colours as u64;
    let (h, w) = (t.height as u64, t.width as u64);
    if level == 1 {
        let m = header.mosaic;
        match header.layout {
            LayoutKind::Packed2d => DatasetGeometry {
                rows: m.rows as u64 * nw * h,
                cols: m.cols as u64 * w,
                chunk_rows: header.chunk.h as u64,
                chunk_cols: header.chunk.w as u64,
            },
            LayoutKind::Linear => DatasetGeometry {
                rows: header.stored_fovs() as u64 * nw * h,
                cols: w,
                chunk_rows: h,
                chunk_cols: w,
            },
            LayoutKind::PerTile => DatasetGeometry {
                rows: m.len() * nw * h,
                cols: w,
                chunk_rows: h,
                chunk_cols: w,
            },
        }
    } else {
        let (lh, lw) = t.level_dims(level);
        DatasetGeometry {
            rows: header.stored_fovs() as u64 * nw * lh as u64,
            cols: lw as u64,
            chunk_rows: lh as u64,
            chunk_cols: lw as u64,
        }
    }
}

pub fn segments(header: &SlideHeader) -> Vec<Segment> {
    let mut base = 0;
    header
        .mip_levels
        .iter()
        .map(|&level| {
            let geometry = level_geometry(header, level);
            let seg = Segment {
                level,
                base,
                geometry,
            };
            base += geometry.chunk_count();
            seg
        })
        .collect()
}

/// Dataset region of colour plane `w` of the fov at storage ordinal `slot`.
pub fn plane_region(header: &SlideHeader, level: u32, slot: usize, w: u32) -> Hyperslab {
    let t = header.tile;
    let nw = t.colours as u64;
    let fov = &header.fovs[slot];
    let (h, wd) = if level == 1 {
        (t.height as u64, t.width as u64)
    } else {
        let (lh, lw) = t.level_dims(level);
        (lh as u64, lw as u64)
    };
    let (row0, col0) = if level == 1 {
        match header.layout {
            LayoutKind::Packed2d => ((fov.r as u64 * nw + w as u64) * h, fov.c as u64 * wd),
            LayoutKind::Linear => ((slot as u64 * nw + w as u64) * h, 0),
            LayoutKind::PerTile => ((fov.linear_index * nw + w as u64) * h, 0),
        }
    } else {
        ((slot as u64 * nw + w as u64) * h, 0)
    };
    Hyperslab::new(row0..row0 + h, col0..col0 + wd)
}

/// Copies the chunks overlapping `slab` into a plane. `fetch` returns the
/// decoded samples of a chunk ordinal, or `None` for an unallocated chunk,
/// which reads as zeros.
pub(crate) fn assemble<F>(
    geometry: &DatasetGeometry,
    slab: &Hyperslab,
    mut fetch: F,
) -> Result<Plane>
where
    F: FnMut(u64) -> Result<Option<Vec<u16>>>,
{
    geometry.check(slab)?;
    let (sh, sw) = (slab.height() as usize, slab.width() as usize);
    let mut out = Plane::zeros(sh, sw);
    let (ch, cw) = (geometry.chunk_rows, geometry.chunk_cols);
    for (cr, cc) in geometry.overlapping(slab) {
        let Some(chunk) = fetch(geometry.ordinal(cr, cc))? else {
            continue;
        };
        let (cy0, cx0) = (cr * ch, cc * cw);
        let y0 = slab.rows.start.max(cy0);
        let y1 = slab.rows.end.min(cy0 + ch);
        let x0 = slab.cols.start.max(cx0);
        let x1 = slab.cols.end.min(cx0 + cw);
        let n = (x1 - x0) as usize;
        let dst = out.samples_mut();
        for y in y0..y1 {
            let src_off = ((y - cy0) * cw + (x0 - cx0)) as usize;
            let dst_off = (y - slab.rows.start) as usize * sw + (x0 - slab.cols.start) as usize;
            dst[dst_off..dst_off + n].copy_from_slice(&chunk[src_off..src_off + n]);
        }
    }
    Ok(out)
}

pub(crate) fn read_at(file: &std::fs::File, buf: &mut [u8], offset: u64) -> std::io::Result<()> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::FileExt;
        file.read_exact_at(buf, offset)
    }
    #[cfg(windows)]
    {
        use std::os::windows::fs::FileExt;
        let mut done = 0;
        while done < buf.len() {
            let n = file.seek_read(&mut buf[done..], offset + done as u64)?;
            if n == 0 {
                return Err(std::io::ErrorKind::UnexpectedEof.into());
            }
            done += n;
        }
        Ok(())
    }
}
