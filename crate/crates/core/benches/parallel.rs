//! Sequential vs parallel execution of the data-parallel hot paths.
//!
//! Build with `--no-default-features` to measure the rayon-free fallback; in
//! that configuration both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vslide_core::cache::CacheConfig;
use vslide_core::codec::CodecChain;
use vslide_core::compositor::{mignify, Compositor, RenderParams, TileSource, ViewportRect};
use vslide_core::container::{open_slide, SlideWriter};
use vslide_core::model::{LayoutKind, MosaicShape, SlideHeader, TileShape};
use vslide_core::spatial::RTree;
use vslide_core::{Execution, Plane};

const STRATEGIES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn content(seed: u64, h: usize, w: usize) -> Plane {
    Plane::from_fn(h, w, |y, x| {
        let n = (y as u64 * 2654435761 + x as u64 * 40503 + seed).wrapping_mul(0x9E3779B97F4A7C15)
            >> 60;
        ((x + y) as u16 * 3 + n as u16) & 0x0FFF
    })
}

fn encode(c: &mut Criterion) {
    let planes: Vec<Vec<u8>> = (0..32)
        .map(|i| content(i, 208, 256).to_le_bytes())
        .collect();
    let chain = CodecChain::bitshuffle_deflate();
    let mut g = c.benchmark_group("encode_32_planes");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| exec.map(&planes, |p| chain.encode(black_box(p)).unwrap().len()))
        });
    }
    g.finish();
}

fn mip(c: &mut Criterion) {
    let planes: Vec<Plane> = (0..16).map(|i| content(i, 1040, 1392)).collect();
    let mut g = c.benchmark_group("mignify_16_tiles");
    g.sample_size(10);
    for level in [2u32, 16] {
        for (name, exec) in STRATEGIES {
            g.bench_with_input(BenchmarkId::new(name, level), &level, |b, &l| {
                b.iter(|| exec.map(&planes, |p| mignify(black_box(p), l).unwrap().width()))
            });
        }
    }
    g.finish();
}

fn render(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.vsf");
    let tile = TileShape::new(208, 256, 3).unwrap();
    let header = SlideHeader::dense(
        "bench",
        MosaicShape::new(6, 6).unwrap(),
        tile,
        LayoutKind::Linear,
        CodecChain::bitshuffle_deflate(),
    )
    .unwrap();
    let mut w = SlideWriter::create(&path, header.clone(), Execution::Parallel).unwrap();
    for f in &header.fovs {
        let planes: Vec<Plane> = (0..3)
            .map(|k| content(f.linear_index * 3 + k, 208, 256))
            .collect();
        w.write_fov(f.r, f.c, &planes).unwrap();
    }
    w.finalize().unwrap();
    let reader = open_slide(&path).unwrap();
    let tree = RTree::build(reader.header().fov_rects());
    let vp = ViewportRect::new(100.0, 1400.0, 50.0, 1200.0).unwrap();
    let mut params = RenderParams::defaults(3);
    params.gamma = 1.8;

    let mut g = c.benchmark_group("render_1024x900");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        // warm caches: measures the shading path, not disk reads
        let comp = Compositor::new(&CacheConfig::default(), exec);
        comp.render_viewport(&reader, &tree, &vp, 1024, 900, &params)
            .unwrap();
        g.bench_function(name, |b| {
            b.iter(|| {
                comp.render_viewport(&reader, &tree, black_box(&vp), 1024, 900, &params)
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, encode, mip, render);
criterion_main!(benches);
