use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{
    assemble, level_geometry, plane_region, read_at, segments, ChunkIndexEntry, FOOTER_MAGIC, MAGIC,
};
use crate::compositor::mignify;
use crate::container::open_slide;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{validate_mip_levels, SlideHeader};
use crate::plane::{le_bytes_to_samples, samples_to_le_bytes, Plane};

/// Fields of view whose mip planes are computed together in finalize.
const MIP_BATCH: usize = 16;

/// Streaming writer for a `VSF1` file. Fields of view may arrive in any
/// order; the index is written by [`finalize`](SlideWriter::finalize).
pub struct SlideWriter {
    out: BufWriter<File>,
    path: PathBuf,
    header: SlideHeader,
    end: u64,
    level1: HashMap<u64, ChunkIndexEntry>,
    written: Vec<bool>,
    exec: Execution,
}

pub fn create_slide(path: impl AsRef<Path>, header: SlideHeader) -> Result<SlideWriter> {
    SlideWriter::create(path, header, Execution::default())
}

impl SlideWriter {
    pub fn create(path: impl AsRef<Path>, header: SlideHeader, exec: Execution) -> Result<Self> {
        header.validate()?;
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)?;
        let json = header.to_canonical_json()?;
        let len = u32::try_from(json.len()).map_err(|_| Error::header("header too large"))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&MAGIC)?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&json)?;
        let written = vec![false; header.stored_fovs()];
        Ok(SlideWriter {
            out,
            path,
            end: 8 + json.len() as u64,
            header,
            level1: HashMap::new(),
            written,
            exec,
        })
    }

    pub fn header(&self) -> &SlideHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn written_count(&self) -> usize {
        self.written.iter().filter(|&&w| w).count()
    }

    /// Chunks, encodes and appends the colour planes of fov `(r, c)`.
    pub fn write_fov(&mut self, r: u32, c: u32, planes: &[Plane]) -> Result<()> {
        let slot = self.header.lookup(r, c).ok_or(Error::UnknownFov { r, c })?;
        if self.written[slot] {
            return Err(Error::DuplicateFov { r, c });
        }
        let t = self.header.tile;
        if planes.len() != t.colours as usize {
            return Err(Error::ShapeMismatch(format!(
                "expected {} planes, got {}",
                t.colours,
                planes.len()
            )));
        }
        if let Some(p) = planes
            .iter()
            .find(|p| (p.height(), p.width()) != (t.height as usize, t.width as usize))
        {
            return Err(Error::ShapeMismatch(format!(
                "plane {}x{} does not match tile {}x{}",
                p.height(),
                p.width(),
                t.height,
                t.width
            )));
        }

        let geometry = level_geometry(&self.header, 1);
        let mut jobs: Vec<(u64, Vec<u8>)> = Vec::new();
        for (w, plane) in planes.iter().enumerate() {
            let region = plane_region(&self.header, 1, slot, w as u32);
            for (cr, cc) in geometry.overlapping(&region) {
                let y0 = (cr * geometry.chunk_rows - region.rows.start) as usize;
                let x0 = (cc * geometry.chunk_cols - region.cols.start) as usize;
                let (ch, cw) = (geometry.chunk_rows as usize, geometry.chunk_cols as usize);
                let mut samples = Vec::with_capacity(ch * cw);
                for y in y0..y0 + ch {
                    samples.extend_from_slice(&plane.row(y)[x0..x0 + cw]);
                }
                jobs.push((geometry.ordinal(cr, cc), samples_to_le_bytes(&samples)));
            }
        }
        let chain = &self.header.codec_chain;
        let encoded = self.exec.try_map(&jobs, |(_, raw)| chain.encode(raw))?;
        for ((ordinal, raw), bytes) in jobs.iter().zip(encoded) {
            let entry = self.append(&bytes, raw.len() as u64)?;
            self.level1.insert(*ordinal, entry);
        }
        self.written[slot] = true;
        Ok(())
    }

    fn append(&mut self, bytes: &[u8], raw_len: u64) -> Result<ChunkIndexEntry> {
        let entry = ChunkIndexEntry {
            offset: self.end,
            compressed_len: bytes.len() as u64,
            raw_len,
            crc32: crc32fast::hash(bytes),
        };
        self.out.write_all(bytes)?;
        self.end += bytes.len() as u64;
        Ok(entry)
    }

    fn read_level1_plane(&mut self, slot: usize, w: u32) -> Result<Plane> {
        self.out.flush()?;
        let geometry = level_geometry(&self.header, 1);
        let region = plane_region(&self.header, 1, slot, w);
        let file = self.out.get_ref();
        let chain = &self.header.codec_chain;
        let entries = &self.level1;
        assemble(&geometry, &region, |ordinal| {
            let Some(e) = entries.get(&ordinal) else {
                return Ok(None);
            };
            let mut buf = vec![0u8; e.compressed_len as usize];
            read_at(file, &mut buf, e.offset)?;
            let raw = chain.decode(&buf, e.raw_len as usize)?;
            Ok(Some(le_bytes_to_samples(&raw)))
        })
    }

    /// Computes the declared mip levels, then writes the chunk index and the
    /// footer. A file without a footer is reported as unfinalized by readers.
    pub fn finalize(mut self) -> Result<()> {
        if let Some(missing) = self.written.iter().position(|w| !w) {
            let f = self.header.fovs[missing];
            return Err(Error::Incomplete(format!(
                "{} of {} fields of view written; ({}, {}) missing",
                self.written_count(),
                self.written.len(),
                f.r,
                f.c
            )));
        }
        let levels: Vec<u32> = self.header.mip_levels[1..].to_vec();
        let mut mip_entries: HashMap<u32, Vec<ChunkIndexEntry>> = HashMap::new();
        if !levels.is_empty() {
            let nw = self.header.tile.colours;
            let slots: Vec<usize> = (0..self.written.len()).collect();
            for batch in slots.chunks(MIP_BATCH) {
                let mut sources = Vec::with_capacity(batch.len() * nw as usize);
                for &slot in batch {
                    for w in 0..nw {
                        sources.push(self.read_level1_plane(slot, w)?);
                    }
                }
                let chain = self.header.codec_chain.clone();
                let levels_ref = &levels;
                // per source plane: one encoded chunk per level
                let encoded = self.exec.try_map(&sources, |plane| {
                    levels_ref
                        .iter()
                        .map(|&l| {
                            let m = mignify(plane, l)?;
                            let raw = m.to_le_bytes();
                            Ok((chain.encode(&raw)?, raw.len() as u64))
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for per_level in encoded {
                    for (&level, (bytes, raw_len)) in levels.iter().zip(per_level) {
                        let e = self.append(&bytes, raw_len)?;
                        mip_entries.entry(level).or_default().push(e);
                    }
                }
            }
        }

        let mut index = Vec::new();
        for seg in segments(&self.header) {
            if seg.level == 1 {
                for ordinal in 0..seg.geometry.chunk_count() {
                    let e = self
                        .level1
                        .get(&ordinal)
                        .copied()
                        .unwrap_or(ChunkIndexEntry::NULL);
                    index.extend_from_slice(&e.to_bytes());
                }
            } else {
                for e in mip_entries.remove(&seg.level).unwrap_or_default() {
                    index.extend_from_slice(&e.to_bytes());
                }
            }
        }
        let count = (index.len() / super::ENTRY_LEN) as u32;
        let index_offset = self.end;
        self.out.write_all(&index)?;
        self.out.write_all(&index_offset.to_le_bytes())?;
        self.out.write_all(&count.to_le_bytes())?;
        self.out.write_all(&FOOTER_MAGIC)?;
        self.out.flush()?;
        self.out.get_ref().sync_all()?;
        Ok(())
    }

    /// Copies an already-encoded level-1 chunk (used when rewriting a file).
    fn copy_level1_chunk(&mut self, ordinal: u64, bytes: &[u8], raw_len: u64) -> Result<()> {
        let entry = self.append(bytes, raw_len)?;
        self.level1.insert(ordinal, entry);
        Ok(())
    }
}

/// Adds mip levels to a finalized slide. The file is rewritten next to the
/// original (level-1 chunks are copied without re-encoding) and atomically
/// renamed over it. Levels already present make this a no-op.
pub fn write_mip_levels(
    path: impl AsRef<Path>,
    levels: &[u32],
    exec: Execution,
) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let reader = open_slide(path)?;
    let mut merged: Vec<u32> = reader.header().mip_levels.clone();
    for &l in levels {
        if l == 0 || !l.is_power_of_two() {
            return Err(Error::config(format!(
                "mip level {l} is not a power of two"
            )));
        }
        merged.push(l);
    }
    merged.sort_unstable();
    merged.dedup();
    validate_mip_levels(&merged)?;
    if merged == reader.header().mip_levels {
        return Ok(merged);
    }
    let mut header = reader.header().clone();
    header.mip_levels = merged.clone();

    let tmp = path.with_extension("vsf.tmp");
    let mut writer = SlideWriter::create(&tmp, header, exec)?;
    let seg = reader.segment(1).expect("level 1 segment");
    for ordinal in 0..seg.geometry.chunk_count() {
        if let Some((bytes, raw_len)) = reader.read_chunk_encoded(1, ordinal)? {
            writer.copy_level1_chunk(ordinal, &bytes, raw_len)?;
        }
    }
    writer.written.fill(true);
    writer.finalize()?;
    drop(reader);
    fs::rename(&tmp, path)?;
    Ok(merged)
}
