//! Layout benchmark: the same mosaic written in every layout, read back with
//! sequential-slab and random-tile access patterns.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{open_slide, SlideReader, SlideWriter};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{ChunkShape, Colour, FieldOfView, LayoutKind, SlideHeader};
use crate::plane::Plane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessPattern {
    /// Whole mosaic, one mosaic row per request, in linear order.
    SequentialSlab,
    /// Seeded uniform draws of single fields of view.
    RandomTile,
}

impl std::str::FromStr for AccessPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sequential_slab" | "sequential" | "slab" => Ok(AccessPattern::SequentialSlab),
            "random_tile" | "random" => Ok(AccessPattern::RandomTile),
            other => Err(Error::config(format!("unknown access pattern `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dir: PathBuf,
    pub layouts: Vec<LayoutKind>,
    pub patterns: Vec<AccessPattern>,
    /// PACKED2D chunk divisor `n` (chunk = tile / n); falls back to 1 when
    /// it does not divide the tile.
    pub packed_divisor: u32,
    pub random_reads: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl BenchConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BenchConfig {
            dir: dir.into(),
            layouts: LayoutKind::ALL.to_vec(),
            patterns: vec![AccessPattern::SequentialSlab, AccessPattern::RandomTile],
            packed_divisor: 2,
            random_reads: 64,
            seed: 1,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencySummary {
    pub fn from_samples(samples_ms: &[f64]) -> Self {
        if samples_ms.is_empty() {
            return LatencySummary {
                mean_ms: 0.0,
                p50_ms: 0.0,
                p95_ms: 0.0,
                max_ms: 0.0,
            };
        }
        let mut s = samples_ms.to_vec();
        s.sort_by(f64::total_cmp);
        let pct = |p: f64| s[((s.len() - 1) as f64 * p).round() as usize];
        LatencySummary {
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            p50_ms: pct(0.5),
            p95_ms: pct(0.95),
            max_ms: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub layout: LayoutKind,
    pub pattern: AccessPattern,
    pub file_bytes: u64,
    pub write_seconds: f64,
    pub tiles_read: u64,
    pub chunks_read: u64,
    pub bytes_read: u64,
    pub decoded_bytes: u64,
    pub read_seconds: f64,
    pub decoded_mib_per_s: f64,
    /// Per-tile load latency.
    pub latency: LatencySummary,
    /// CRC-32 over every decoded sample, in request order.
    pub digest: u32,
}

fn header_for(template: &SlideHeader, layout: LayoutKind, divisor: u32) -> SlideHeader {
    let mut h = template.clone();
    h.layout = layout;
    let t = h.tile;
    h.chunk = match layout {
        LayoutKind::Packed2d
            if divisor > 1 && t.height % divisor == 0 && t.width % divisor == 0 =>
        {
            ChunkShape {
                h: t.height / divisor,
                w: t.width / divisor,
            }
        }
        _ => ChunkShape {
            h: t.height,
            w: t.width,
        },
    };
    h.slide_id = format!(
        "{}-{}",
        template.slide_id,
        layout.name().to_ascii_lowercase()
    );
    h
}

/// Writes `template`'s mosaic once per layout (content from `content`) and
/// measures each access pattern. Rows come out in `(layout, pattern)` order.
pub fn bench_layouts<F>(
    cfg: &BenchConfig,
    template: &SlideHeader,
    content: F,
) -> Result<Vec<BenchRow>>
where
    F: Fn(&FieldOfView) -> Vec<Plane> + Sync,
{
    std::fs::create_dir_all(&cfg.dir)?;
    let mut rows = Vec::new();
    for &layout in &cfg.layouts {
        let header = header_for(template, layout, cfg.packed_divisor);
        header.validate()?;
        let path = cfg
            .dir
            .join(format!("bench-{}.vsf", layout.name().to_ascii_lowercase()));

        let t0 = Instant::now();
        let mut writer = SlideWriter::create(&path, header.clone(), cfg.exec)?;
        for fov in &header.fovs {
            writer.write_fov(fov.r, fov.c, &content(fov))?;
        }
        writer.finalize()?;
        let write_seconds = t0.elapsed().as_secs_f64();

        let reader = open_slide(&path)?.with_execution(cfg.exec);
        for &pattern in &cfg.patterns {
            reader.reset_stats();
            let (tiles, latencies, decoded, digest, secs) = match pattern {
                AccessPattern::SequentialSlab => sequential(&reader)?,
                AccessPattern::RandomTile => random(&reader, cfg.random_reads, cfg.seed)?,
            };
            let stats = reader.stats();
            rows.push(BenchRow {
                layout,
                pattern,
                file_bytes: reader.file_len(),
                write_seconds,
                tiles_read: tiles,
                chunks_read: stats.chunks_read,
                bytes_read: stats.bytes_read,
                decoded_bytes: decoded,
                read_seconds: secs,
                decoded_mib_per_s: if secs > 0.0 {
                    decoded as f64 / (1 << 20) as f64 / secs
                } else {
                    0.0
                },
                latency: LatencySummary::from_samples(&latencies),
                digest,
            });
        }
    }
    Ok(rows)
}

type PatternResult = (u64, Vec<f64>, u64, u32, f64);

fn digest_planes(hasher: &mut crc32fast::Hasher, planes: &[Plane]) -> u64 {
    let mut n = 0;
    for p in planes {
        let bytes = p.to_le_bytes();
        hasher.update(&bytes);
        n += bytes.len() as u64;
    }
    n
}

fn sequential(reader: &SlideReader) -> Result<PatternResult> {
    let h = reader.header();
    let cols = h.mosaic.cols as u64;
    let mut hasher = crc32fast::Hasher::new();
    let mut latencies = Vec::new();
    let (mut tiles, mut decoded) = (0u64, 0u64);
    let start = Instant::now();
    for r in 0..h.mosaic.rows as u64 {
        let (lo, hi) = (r * cols, (r + 1) * cols);
        let t0 = Instant::now();
        let (n, planes) = if h.layout == LayoutKind::Linear {
            let n = reader.slab_fovs(lo, hi).len();
            (n, reader.read_slab(lo, hi, 1)?)
        } else {
            let fovs = reader.slab_fovs(lo, hi).to_vec();
            let mut planes = Vec::new();
            for f in &fovs {
                planes.extend(
                    reader
                        .read_fov(f.r, f.c, Colour::All, 1)?
                        .unwrap_or_default(),
                );
            }
            (fovs.len(), planes)
        };
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        if n > 0 {
            latencies.extend(std::iter::repeat_n(ms / n as f64, n));
        }
        tiles += n as u64;
        decoded += digest_planes(&mut hasher, &planes);
    }
    Ok((
        tiles,
        latencies,
        decoded,
        hasher.finalize(),
        start.elapsed().as_secs_f64(),
    ))
}

fn random(reader: &SlideReader, reads: usize, seed: u64) -> Result<PatternResult> {
    let fovs = &reader.header().fovs;
    let mut hasher = crc32fast::Hasher::new();
    let mut latencies = Vec::with_capacity(reads);
    let mut decoded = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    if !fovs.is_empty() {
        for _ in 0..reads {
            let f = fovs[rng.gen_range(0..fovs.len())];
            let t0 = Instant::now();
            let planes = reader
                .read_fov(f.r, f.c, Colour::All, 1)?
                .unwrap_or_default();
            latencies.push(t0.elapsed().as_secs_f64() * 1e3);
            decoded += digest_planes(&mut hasher, &planes);
        }
    }
    Ok((
        latencies.len() as u64,
        latencies,
        decoded,
        hasher.finalize(),
        start.elapsed().as_secs_f64(),
    ))
}
