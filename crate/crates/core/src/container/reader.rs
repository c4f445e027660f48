use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use super::{
    assemble, plane_region, read_at, segments, ChunkIndexEntry, Hyperslab, Segment, ENTRY_LEN,
    FOOTER_LEN, FOOTER_MAGIC, MAGIC, MAX_HEADER_LEN,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Colour, FieldOfView, LayoutKind, SlideHeader};
use crate::plane::{le_bytes_to_samples, Plane};

/// Chunk access counters of a reader.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub chunks_read: u64,
    pub bytes_read: u64,
}

/// Read handle on a finalized `VSF1` file. Reads use positional I/O, so a
/// shared reference can serve concurrent independent requests.
pub struct SlideReader {
    file: File,
    path: PathBuf,
    header: SlideHeader,
    file_len: u64,
    data_start: u64,
    index_offset: u64,
    entries: Vec<ChunkIndexEntry>,
    segments: Vec<Segment>,
    chunks_read: AtomicU64,
    bytes_read: AtomicU64,
    exec: Execution,
}

impl std::fmt::Debug for SlideReader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlideReader")
            .field("path", &self.path)
            .field("slide_id", &self.header.slide_id)
            .finish_non_exhaustive()
    }
}

pub fn open_slide(path: impl AsRef<Path>) -> Result<SlideReader> {
    SlideReader::open(path)
}

impl SlideReader {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let file_len = file.metadata()?.len();
        if file_len < 8 {
            return Err(Error::BadMagic);
        }
        let mut pre = [0u8; 8];
        read_at(&file, &mut pre, 0)?;
        if pre[0..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        let header_len = u32::from_le_bytes(pre[4..8].try_into().unwrap());
        if header_len > MAX_HEADER_LEN || 8 + header_len as u64 > file_len {
            return Err(Error::Format(format!(
                "header length {header_len} exceeds file"
            )));
        }
        let mut json = vec![0u8; header_len as usize];
        read_at(&file, &mut json, 8)?;
        let header = SlideHeader::from_json(&json)?;
        let data_start = 8 + header_len as u64;

        if file_len < data_start + FOOTER_LEN as u64 {
            return Err(Error::Unfinalized);
        }
        let mut footer = [0u8; FOOTER_LEN];
        read_at(&file, &mut footer, file_len - FOOTER_LEN as u64)?;
        if footer[12..16] != FOOTER_MAGIC {
            return Err(Error::Unfinalized);
        }
        let index_offset = u64::from_le_bytes(footer[0..8].try_into().unwrap());
        let count = u32::from_le_bytes(footer[8..12].try_into().unwrap()) as u64;

        let segments = segments(&header);
        let expected: u64 = segments.iter().map(|s| s.geometry.chunk_count()).sum();
        if count != expected {
            return Err(Error::Format(format!(
                "index has {count} entries, header implies {expected}"
            )));
        }
        if index_offset < data_start
            || index_offset + count * ENTRY_LEN as u64 + FOOTER_LEN as u64 != file_len
        {
            return Err(Error::Format(
                "index table position inconsistent with file size".into(),
            ));
        }
        let mut raw = vec![0u8; (count as usize) * ENTRY_LEN];
        read_at(&file, &mut raw, index_offset)?;
        let entries: Vec<ChunkIndexEntry> = raw
            .chunks_exact(ENTRY_LEN)
            .map(ChunkIndexEntry::from_bytes)
            .collect();

        let reader = SlideReader {
            file,
            path,
            header,
            file_len,
            data_start,
            index_offset,
            entries,
            segments,
            chunks_read: AtomicU64::new(0),
            bytes_read: AtomicU64::new(0),
            exec: Execution::default(),
        };
        reader.check_index()?;
        Ok(reader)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn check_index(&self) -> Result<()> {
        let mut spans: Vec<(u64, u64)> = Vec::new();
        for seg in &self.segments {
            let raw_len = seg.geometry.chunk_raw_len();
            let n = seg.geometry.chunk_count();
            for e in &self.entries[seg.base as usize..(seg.base + n) as usize] {
                if e.is_null() {
                    if seg.level != 1 {
                        return Err(Error::Format(format!(
                            "missing chunk at level {}",
                            seg.level
                        )));
                    }
                    continue;
                }
                if e.raw_len != raw_len {
                    return Err(Error::Format(format!(
                        "chunk raw length {} != {raw_len}",
                        e.raw_len
                    )));
                }
                if e.offset < self.data_start || e.offset + e.compressed_len > self.index_offset {
                    return Err(Error::Format("chunk outside data region".into()));
                }
                spans.push((e.offset, e.offset + e.compressed_len));
            }
        }
        spans.sort_unstable();
        if spans.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(Error::Format("overlapping chunks in index".into()));
        }
        Ok(())
    }

    pub fn header(&self) -> &SlideHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn segment(&self, level: u32) -> Option<&Segment> {
        self.segments.iter().find(|s| s.level == level)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Index entries of one level, in ordinal order.
    pub fn entries(&self, level: u32) -> Option<&[ChunkIndexEntry]> {
        let s = self.segment(level)?;
        Some(&self.entries[s.base as usize..(s.base + s.geometry.chunk_count()) as usize])
    }

    pub fn stats(&self) -> ReadStats {
        ReadStats {
            chunks_read: self.chunks_read.load(Ordering::Relaxed),
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
        }
    }

    pub fn reset_stats(&self) {
        self.chunks_read.store(0, Ordering::Relaxed);
        self.bytes_read.store(0, Ordering::Relaxed);
    }

    fn level_segment(&self, level: u32) -> Result<&Segment> {
        self.segment(level)
            .ok_or_else(|| Error::domain(format!("level {level} not stored in slide")))
    }

    fn entry(&self, level: u32, ordinal: u64) -> Result<ChunkIndexEntry> {
        let seg = self.level_segment(level)?;
        if ordinal >= seg.geometry.chunk_count() {
            return Err(Error::domain(format!(
                "chunk ordinal {ordinal} out of range"
            )));
        }
        Ok(self.entries[(seg.base + ordinal) as usize])
    }

    fn verify(&self, level: u32, ordinal: u64, e: &ChunkIndexEntry, bytes: &[u8]) -> Result<()> {
        let crc = crc32fast::hash(bytes);
        if crc != e.crc32 {
            return Err(Error::Corrupt {
                level,
                ordinal,
                reason: format!("crc32 {crc:08x} != {:08x}", e.crc32),
            });
        }
        Ok(())
    }

    fn decode(
        &self,
        level: u32,
        ordinal: u64,
        e: &ChunkIndexEntry,
        bytes: &[u8],
    ) -> Result<Vec<u16>> {
        self.verify(level, ordinal, e, bytes)?;
        let raw = self
            .header
            .codec_chain
            .decode(bytes, e.raw_len as usize)
            .map_err(|err| Error::Corrupt {
                level,
                ordinal,
                reason: err.to_string(),
            })?;
        Ok(le_bytes_to_samples(&raw))
    }

    fn read_bytes(&self, offset: u64, len: u64) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; len as usize];
        read_at(&self.file, &mut buf, offset)?;
        self.bytes_read.fetch_add(len, Ordering::Relaxed);
        Ok(buf)
    }

    /// Compressed bytes and raw length of a chunk, CRC-checked. `None` for
    /// unallocated chunks.
    pub fn read_chunk_encoded(&self, level: u32, ordinal: u64) -> Result<Option<(Vec<u8>, u64)>> {
        let e = self.entry(level, ordinal)?;
        if e.is_null() {
            return Ok(None);
        }
        let bytes = self.read_bytes(e.offset, e.compressed_len)?;
        self.chunks_read.fetch_add(1, Ordering::Relaxed);
        self.verify(level, ordinal, &e, &bytes)?;
        Ok(Some((bytes, e.raw_len)))
    }

    /// Decoded samples of one chunk; `None` for unallocated chunks.
    pub fn read_chunk(&self, level: u32, ordinal: u64) -> Result<Option<Vec<u16>>> {
        let e = self.entry(level, ordinal)?;
        if e.is_null() {
            return Ok(None);
        }
        let bytes = self.read_bytes(e.offset, e.compressed_len)?;
        self.chunks_read.fetch_add(1, Ordering::Relaxed);
        self.decode(level, ordinal, &e, &bytes).map(Some)
    }

    /// Reads a rectangular region of the dataset of `level`, touching only
    /// the chunks that overlap it. Unallocated chunks read as zeros.
    pub fn read_hyperslab(&self, level: u32, slab: &Hyperslab) -> Result<Plane> {
        let seg = *self.level_segment(level)?;
        assemble(&seg.geometry, slab, |ordinal| {
            self.read_chunk(level, ordinal)
        })
    }

    /// Planes of fov `(r, c)` at `level`, or `None` when the mosaic has no
    /// such field of view.
    pub fn read_fov(
        &self,
        r: u32,
        c: u32,
        colour: Colour,
        level: u32,
    ) -> Result<Option<Vec<Plane>>> {
        let Some(slot) = self.header.lookup(r, c) else {
            return Ok(None);
        };
        self.level_segment(level)?;
        let colours: Vec<u32> = match colour {
            Colour::All => (0..self.header.tile.colours).collect(),
            Colour::Index(w) if w < self.header.tile.colours => vec![w],
            Colour::Index(w) => {
                return Err(Error::domain(format!(
                    "colour {w} outside 0..{}",
                    self.header.tile.colours
                )))
            }
        };
        colours
            .into_iter()
            .map(|w| self.read_hyperslab(level, &plane_region(&self.header, level, slot, w)))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    /// Fields of view with linear index in `[lower_index, upper_index)`.
    pub fn slab_fovs(&self, lower_index: u64, upper_index: u64) -> &[FieldOfView] {
        let fovs = &self.header.fovs;
        let lo = fovs.partition_point(|f| f.linear_index < lower_index);
        let hi = fovs.partition_point(|f| f.linear_index < upper_index);
        &fovs[lo..hi.max(lo)]
    }

    /// All colour planes of the fields of view in `[lower_index, upper_index)`,
    /// in linear order. LINEAR layout only: the planes are one contiguous run
    /// of dataset rows, read with as few I/O requests as possible.
    pub fn read_slab(&self, lower_index: u64, upper_index: u64, level: u32) -> Result<Vec<Plane>> {
        if self.header.layout != LayoutKind::Linear {
            return Err(Error::Unsupported(format!(
                "slab reads need the LINEAR layout, slide is {}",
                self.header.layout
            )));
        }
        if lower_index > upper_index {
            return Err(Error::domain("slab lower index exceeds upper index"));
        }
        let seg = *self.level_segment(level)?;
        let fovs = &self.header.fovs;
        let i0 = fovs.partition_point(|f| f.linear_index < lower_index) as u64;
        let i1 = fovs.partition_point(|f| f.linear_index < upper_index) as u64;
        if i1 <= i0 {
            return Ok(Vec::new());
        }
        let nw = self.header.tile.colours as u64;
        let ordinals: Vec<u64> = (i0 * nw..i1 * nw).collect();
        let entries: Vec<ChunkIndexEntry> = ordinals
            .iter()
            .map(|&o| self.entries[(seg.base + o) as usize])
            .collect();

        // coalesce physically adjacent chunks into single reads
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for (k, e) in entries.iter().enumerate() {
            match runs.last_mut() {
                Some((_, end))
                    if entries[*end - 1].offset + entries[*end - 1].compressed_len == e.offset =>
                {
                    *end = k + 1;
                }
                _ => runs.push((k, k + 1)),
            }
        }
        let mut blobs: Vec<(usize, Vec<u8>)> = Vec::with_capacity(entries.len());
        for (start, end) in runs {
            let first = &entries[start];
            let last = &entries[end - 1];
            let span = last.offset + last.compressed_len - first.offset;
            let buf = self.read_bytes(first.offset, span)?;
            for k in start..end {
                let rel = (entries[k].offset - first.offset) as usize;
                blobs.push((
                    k,
                    buf[rel..rel + entries[k].compressed_len as usize].to_vec(),
                ));
            }
        }
        self.chunks_read
            .fetch_add(entries.len() as u64, Ordering::Relaxed);
        let (ch, cw) = (
            seg.geometry.chunk_rows as usize,
            seg.geometry.chunk_cols as usize,
        );
        self.exec.try_map(&blobs, |(k, bytes)| {
            let samples = self.decode(level, ordinals[*k], &entries[*k], bytes)?;
            Plane::new(ch, cw, samples)
        })
    }

    /// Verifies the CRC of every stored chunk.
    pub fn verify_all(&self) -> Result<()> {
        for seg in &self.segments {
            for ordinal in 0..seg.geometry.chunk_count() {
                self.read_chunk_encoded(seg.level, ordinal)?;
            }
        }
        Ok(())
    }
}
