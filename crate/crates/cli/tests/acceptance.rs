//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Set `VSLIDE_BLESS=1` to (re)write the golden render.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vslide_core::cache::CacheConfig;
use vslide_core::codec::CodecChain;
use vslide_core::compositor::{
    apply_gamma, mignify, mix, mix_corrected, normalize, Compositor, ContrastWindow, MixerMatrix, RenderParams,
    RgbImage, StatusVector, ViewportRect, ZoomDirection, ZoomPolicy,
};
use vslide_core::container::{open_slide, SlideWriter};
use vslide_core::model::{
    fov_bounds, grid_fovs, linear_slab_rows, plane_row_offset, sparse_lookup, Colour, LayoutKind, MosaicShape,
    SlideHeader, TileShape,
};
use vslide_core::spatial::{RTree, Rect};
use vslide_core::{Execution, Plane};
use vslide_ingest::{manager_serve, run_session, synth, Catalog, ScanPlan, SessionOptions};
use vslide_remote::protocol::{canonical, HeaderRequest, GET_HEADER, GET_SLAB, GET_TILE, LIST};
use vslide_remote::{Client, Gateway, GatewayConfig, RemoteSlide, SlabRequest, TilePayload, TileRequest};
use vslide_remote::{Server, ServerConfig, StaticCatalog};

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn write_plan(plan: &ScanPlan, path: &Path) -> SlideHeader {
    let h = plan.header().unwrap();
    let mut w = SlideWriter::create(path, h.clone(), Execution::Parallel).unwrap();
    for f in &h.fovs {
        w.write_fov(f.r, f.c, &synth::tile_planes(plan, &h.tile, f)).unwrap();
    }
    w.finalize().unwrap();
    h
}

/// The 10x10, 3 colour, 256x208 plan of the roundtrip and performance checks.
fn camera_plan(layout: LayoutKind, codec: CodecChain) -> ScanPlan {
    ScanPlan {
        slide_id: "accept".into(),
        rows: 10,
        cols: 10,
        tile_width: 256,
        tile_height: 208,
        colours: 3,
        layout,
        codec,
        ..ScanPlan::default()
    }
}

fn chains() -> [CodecChain; 3] {
    [CodecChain::raw(), CodecChain::deflate(), CodecChain::bitshuffle_deflate()]
}

fn roundtrip(fx: &Fixture) -> Outcome {
    let t0 = Instant::now();
    for layout in LayoutKind::ALL {
        for chain in chains() {
            let plan = camera_plan(layout, chain.clone());
            let path = fx.path(&format!("rt-{layout}-{chain}.vsf"));
            let h = write_plan(&plan, &path);
            let r = open_slide(&path).unwrap();
            check!(r.header() == &h, "{layout}/{chain}: header differs");
            for f in &h.fovs {
                let got = r.read_fov(f.r, f.c, Colour::All, 1).unwrap().unwrap();
                check!(got == synth::tile_planes(&plan, &h.tile, f), "{layout}/{chain}: fov {} differs", f.linear_index);
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check!(secs < 30.0, "took {secs:.1} s, limit 30 s");
    Ok(format!("9 files x 100 fovs bit-identical in {secs:.1} s (< 30 s)"))
}

fn ratio_of(path: &Path) -> f64 {
    let r = open_slide(path).unwrap();
    let e = r.entries(1).unwrap();
    let c: u64 = e.iter().map(|e| e.compressed_len).sum();
    let raw: u64 = e.iter().map(|e| e.raw_len).sum();
    c as f64 / raw as f64
}

fn compression(fx: &Fixture) -> Outcome {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for layout in LayoutKind::ALL {
        let bs = ratio_of(&fx.path(&format!("rt-{layout}-{}.vsf", CodecChain::bitshuffle_deflate())));
        let df = ratio_of(&fx.path(&format!("rt-{layout}-{}.vsf", CodecChain::deflate())));
        check!(bs <= 0.75, "{layout}: BITSHUFFLE16+DEFLATE ratio {bs:.3} > 0.75");
        check!(bs < df, "{layout}: bitshuffle {bs:.3} not better than deflate {df:.3}");
        worst = worst.max(bs);
        detail.push(format!("{layout} {bs:.3} vs {df:.3}"));
    }
    Ok(format!("ratio <= 0.75 (worst {worst:.3}), below DEFLATE: {}", detail.join(", ")))
}

fn layout_arithmetic(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for draw in 0..100 {
        let cols: u32 = rng.gen_range(1..=12);
        let nw: u32 = rng.gen_range(1..=4);
        let h: u32 = rng.gen_range(1..=6);
        let i: u64 = rng.gen_range(0..10);
        let w: u32 = rng.gen_range(0..nw);
        let width = 3u32;

        // LINEAR slab addressing, spelled out
        let lower_index = 10 * cols as u64 + 20;
        let upper_index = 10 * cols as u64 + 30;
        let field_of_view_step = nw as u64 * h as u64;
        let lower_r = lower_index * field_of_view_step;
        let upper_r = upper_index * field_of_view_step;
        let row_offset = i * field_of_view_step + w as u64 * h as u64;
        check!(
            linear_slab_rows(lower_index, upper_index, nw, h) == (lower_r, upper_r),
            "draw {draw}: slab rows"
        );
        check!(plane_row_offset(i, w, nw, h) == row_offset, "draw {draw}: row offset");

        // per-tile oracle: walk every plane before (i, w) and add its height
        let walked: u64 = (0..i).map(|_| (0..nw).map(|_| h as u64).sum::<u64>()).sum::<u64>() + (0..w).map(|_| h as u64).sum::<u64>();
        check!(walked == row_offset, "draw {draw}: walk {walked} != {row_offset}");

        // and on a real LINEAR file: the rows at row_offset are plane w of fov lower+i
        let rows = 10 + 30u32.div_ceil(cols);
        let tile = TileShape::new(h, width, nw).unwrap();
        let hd = SlideHeader::dense(
            "arith",
            MosaicShape::new(rows, cols).unwrap(),
            tile,
            LayoutKind::Linear,
            CodecChain::deflate(),
        )
        .unwrap();
        let path = fx.path("arith.vsf");
        let mut wr = SlideWriter::create(&path, hd.clone(), Execution::Sequential).unwrap();
        for f in &hd.fovs {
            let planes: Vec<Plane> = (0..nw)
                .map(|k| Plane::from_fn(h as usize, width as usize, |y, x| (f.linear_index * 97 + k as u64 * 13 + (y * 5 + x) as u64) as u16))
                .collect();
            wr.write_fov(f.r, f.c, &planes).unwrap();
        }
        wr.finalize().unwrap();
        let r = open_slide(&path).unwrap();
        let memory: Vec<u16> = r
            .read_slab(lower_index, upper_index, 1)
            .unwrap()
            .iter()
            .flat_map(|p| p.samples().to_vec())
            .collect();
        check!(memory.len() as u64 == (upper_r - lower_r) * width as u64, "draw {draw}: slab size");
        let ww = width as usize;
        let colour_image = &memory[row_offset as usize * ww..(row_offset as usize + h as usize) * ww];
        let (fr, fc) = vslide_core::model::decompose_index(lower_index + i, cols);
        let oracle = r.read_fov(fr, fc, Colour::Index(w), 1).unwrap().unwrap();
        check!(colour_image == oracle[0].samples(), "draw {draw}: slab rows are not the expected plane");
    }
    Ok("100 draws: slab rows, row_offset and file contents exact".into())
}

fn sparse_bisection(_: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tile = TileShape::new(4, 4, 1).unwrap();
    let mut queries = 0u64;
    for m in 0..1000 {
        let rows = rng.gen_range(1..=20);
        let cols = rng.gen_range(1..=20);
        let keep = rng.gen_range(0.0..=1.0);
        let mut fovs = grid_fovs(MosaicShape::new(rows, cols).unwrap(), tile, 0.0, 0, 1000.0).unwrap();
        fovs.retain(|_| rng.gen_bool(keep));
        for q in 0..rows as u64 * cols as u64 + 3 {
            let scan = fovs.iter().position(|f| f.linear_index == q);
            check!(sparse_lookup(&fovs, q) == scan, "mosaic {m}: index {q}");
            queries += 1;
        }
    }
    Ok(format!("1000 mosaics, {queries} lookups identical"))
}

fn rtree(_: &Fixture) -> Outcome {
    let tile = TileShape::new(1040, 1392, 1).unwrap();
    let fovs = grid_fovs(MosaicShape::new(43, 51).unwrap(), tile, 0.1, 37, 162.5).unwrap();
    let rects: Vec<(Rect, u64)> = fovs.iter().map(|f| (fov_bounds(f, &tile), f.linear_index)).collect();
    let tree = RTree::build(rects.clone());
    let b = tree.bounds().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0usize;
    for v in 0..1000 {
        let x0 = rng.gen_range(b.x0 - 5000..b.x1);
        let y0 = rng.gen_range(b.y0 - 5000..b.y1);
        let q = Rect::new(x0, y0, x0 + rng.gen_range(1..60_000), y0 + rng.gen_range(1..40_000));
        let got: BTreeSet<u64> = tree.query_intersect(&q).into_iter().collect();
        let brute: BTreeSet<u64> = rects.iter().filter(|(r, _)| r.intersects(&q)).map(|(_, id)| *id).collect();
        check!(got == brute, "viewport {v} {q:?}: {} vs {}", got.len(), brute.len());
        hits += got.len();
    }

    // 19 x 22 tiles of the 1392 x 1040 camera, no overlap
    let pitch = 162.5;
    let grid = grid_fovs(MosaicShape::new(30, 30).unwrap(), tile, 0.0, 0, pitch).unwrap();
    let ctree = RTree::build(grid.iter().map(|f| (fov_bounds(f, &tile), f.linear_index)).collect());
    let view = Rect::new(4 * 1392, 5 * 1040, 26 * 1392, 24 * 1040);
    let n = ctree.query_intersect(&view).len();
    check!(n == 418, "19 x 22 viewport covers {n} tiles, expected 418");
    let mpx = n as f64 * 1392.0 * 1040.0 / 1e6;
    let (wmm, hmm) = (view.width() as f64 * pitch / 1e6, view.height() as f64 * pitch / 1e6);
    check!((mpx / 595.0 - 1.0).abs() < 0.05, "{mpx:.0} Mpx, expected around 595");
    check!((wmm / 4.9 - 1.0).abs() < 0.05 && (hmm / 3.1 - 1.0).abs() < 0.05, "{wmm:.2} x {hmm:.2} mm");
    Ok(format!(
        "1000 viewports exact ({hits} hits, tree height {}); 19 x 22 view 418 tiles, {mpx:.0} Mpx, {wmm:.2} x {hmm:.2} mm",
        tree.height()
    ))
}

fn rendering_math(_: &Fixture) -> Outcome {
    const TOL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let x0 = rng.gen_range(-1e6..1e6);
        let y0 = rng.gen_range(-1e6..1e6);
        let vp = ViewportRect::new(x0, x0 + rng.gen_range(1e-3..1e6), y0, y0 + rng.gen_range(1e-3..1e6)).unwrap();
        for (x, y, ex, ey) in [
            (vp.x_inf, vp.y_inf, -1.0, -1.0),
            (vp.x_sup, vp.y_inf, 1.0, -1.0),
            (vp.x_inf, vp.y_sup, -1.0, 1.0),
            (vp.x_sup, vp.y_sup, 1.0, 1.0),
        ] {
            let (nx, ny) = vp.ndc_map(x, y);
            check!((nx - ex).abs() <= TOL && (ny - ey).abs() <= TOL, "corner ({x}, {y}) -> ({nx}, {ny})");
        }

        let lo: u16 = rng.gen_range(0..60000);
        let win = ContrastWindow::new(lo, rng.gen_range(lo + 1..=u16::MAX)).unwrap();
        check!(normalize(win.i_inf, win) == 0.0 && normalize(win.i_sup, win) == 1.0, "endpoints of {win:?}");
        if win.i_inf > 0 {
            check!(normalize(rng.gen_range(0..win.i_inf), win) == 0.0, "below window clamps to 0");
        }
        if win.i_sup < u16::MAX {
            check!(normalize(rng.gen_range(win.i_sup + 1..=u16::MAX), win) == 1.0, "above window clamps to 1");
        }

        let nw = rng.gen_range(1..=6usize);
        let mut p = RenderParams::defaults(nw);
        p.mixer = MixerMatrix::new(std::array::from_fn(|_| (0..nw).map(|_| rng.gen_range(0.0..2.0)).collect())).unwrap();
        p.gamma = rng.gen_range(0.2..4.0);
        let off = rng.gen_range(0..nw);
        p.status = StatusVector::new((0..nw).map(|i| i != off && rng.gen_bool(0.7)).collect());
        let mut lhat: Vec<f64> = (0..nw).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let a = mix(&p, &lhat);
        lhat[off] = rng.gen_range(0.0..=1.0);
        check!(mix(&p, &lhat) == a, "gated-off channel changed the output");
        check!(a.iter().all(|v| (0.0..=1.0).contains(v)), "mixer output {a:?} outside [0, 1]");

        let v: f64 = rng.gen_range(0.0..=1.0);
        check!(apply_gamma(v, 1.0) == v, "gamma 1 changed {v}");
        p.gamma = 1.0;
        check!(mix(&p, &lhat) == mix_corrected(&p, &lhat), "gamma 1 mix differs");
    }
    Ok("1000 random cases: corners, window ends, gating, clamping, gamma 1 (tol 1e-12)".into())
}

fn mip(_: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cam = Plane::from_fn(1040, 1392, |_, _| rng.gen_range(0..4096));
    let l16 = mignify(&cam, 16).unwrap();
    check!((l16.width(), l16.height()) == (87, 65), "level 16 is {}x{}", l16.width(), l16.height());
    let twice = mignify(&mignify(&cam, 2).unwrap(), 2).unwrap();
    let once = mignify(&cam, 4).unwrap();
    check!((twice.width(), twice.height()) == (once.width(), once.height()), "shapes differ");
    let max = twice
        .samples()
        .iter()
        .zip(once.samples())
        .map(|(a, b)| (*a as i32 - *b as i32).abs())
        .max()
        .unwrap();
    check!(max <= 1, "L2 o L2 vs L4 differs by {max} LSB");
    Ok(format!("1392x1040 -> 87x65 at level 16; L2 o L2 vs L4 max diff {max} LSB (<= 1)"))
}

fn zoom(_: &Fixture) -> Outcome {
    let p = ZoomPolicy::with_levels(vec![1, 8, 16]).unwrap();
    for (scale, want) in [(1.0 / 16.0, 16), (1.0 / 10.0, 8), (1.0, 1)] {
        let got = p.choose_level(scale, ZoomDirection::In);
        check!(got == want, "scale {scale} -> level {got}, expected {want}");
    }
    let x = ZoomPolicy::new(vec![1, 8, 16], vec![(0.07, 0.2)], 0.01, 4.0).unwrap();
    check!(x.constrain(0.1, ZoomDirection::In) == 0.2, "zoom in does not snap up");
    check!(x.constrain(0.1, ZoomDirection::Out) == 0.07, "zoom out does not snap down");
    check!(x.choose_level(0.1, ZoomDirection::In) == 1, "level after snapping up");
    check!(x.choose_level(0.1, ZoomDirection::Out) == 8, "level after snapping down");
    Ok("1/16 -> 16, 1/10 -> 8, 1 -> 1; (0.07, 0.2) snaps to 0.2 in / 0.07 out".into())
}

fn golden_fixture(fx: &Fixture) -> (PathBuf, ViewportRect, RenderParams, (usize, usize)) {
    let plan = ScanPlan {
        slide_id: "golden".into(),
        rows: 4,
        cols: 5,
        tile_width: 64,
        tile_height: 52,
        colours: 3,
        overlap: 0.1,
        shear_px: 3,
        seed: 11,
        mip_levels: vec![1, 2],
        ..ScanPlan::default()
    };
    let path = fx.path("golden.vsf");
    if !path.exists() {
        write_plan(&plan, &path);
    }
    let mut params = RenderParams::defaults(3);
    params.contrast = vec![
        ContrastWindow::new(0, 3000).unwrap(),
        ContrastWindow::new(200, 4095).unwrap(),
        ContrastWindow::new(500, 3500).unwrap(),
    ];
    params.gamma = 0.8;
    params.level = 2;
    let vp = ViewportRect::new(-20.0, 300.0, 10.0, 210.0).unwrap();
    (path, vp, params, (160, 100))
}

fn golden_render(fx: &Fixture) -> Outcome {
    let (path, vp, params, (w, h)) = golden_fixture(fx);
    let reader = open_slide(&path).unwrap();
    let tree = RTree::build(reader.header().fov_rects());
    let render = |src: &dyn vslide_core::compositor::TileSource| {
        Compositor::new(&CacheConfig::default(), Execution::Parallel)
            .render_viewport(src, &tree, &vp, w, h, &params)
            .unwrap()
            .to_png()
            .unwrap()
    };
    let first = render(&reader);
    let second = render(&reader);
    check!(first == second, "two local renders differ");
    let seq = Compositor::new(&CacheConfig::default(), Execution::Sequential)
        .render_viewport(&reader, &tree, &vp, w, h, &params)
        .unwrap()
        .to_png()
        .unwrap();
    check!(seq == first, "sequential render differs");

    let server = Server::bind(
        "127.0.0.1:0",
        Arc::new(StaticCatalog::from_paths([&path]).unwrap()),
        ServerConfig::default(),
    )
    .unwrap()
    .spawn()
    .unwrap();
    let remote = RemoteSlide::connect(server.addr(), "golden").unwrap();
    check!(render(&remote) == first, "remote render differs from local");

    let gw = Gateway::bind("127.0.0.1:0", server.addr(), GatewayConfig::default()).unwrap().spawn().unwrap();
    let body = serde_json::json!({ "contrast": params.contrast, "gamma": params.gamma, "level": params.level });
    let resp = ureq::get(&format!("http://{}/slides/golden/render", gw.addr()))
        .query("x0", &vp.x_inf.to_string())
        .query("x1", &vp.x_sup.to_string())
        .query("y0", &vp.y_inf.to_string())
        .query("y1", &vp.y_sup.to_string())
        .query("w", &w.to_string())
        .query("h", &h.to_string())
        .query("params", &body.to_string())
        .call()
        .map_err(|e| format!("gateway: {e}"))?;
    let mut http = Vec::new();
    std::io::Read::read_to_end(&mut resp.into_reader(), &mut http).unwrap();
    check!(http == first, "gateway render differs from local");
    gw.shutdown();
    server.shutdown();

    let img = RgbImage::from_png(&first).unwrap();
    check!(img.pixel(0, 50) == [0, 0, 0], "left of the mosaic is not black");
    check!(!img.is_black(), "render is black");

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/render.png");
    if std::env::var_os("VSLIDE_BLESS").is_some() {
        std::fs::write(&golden, &first).unwrap();
    }
    let stored = std::fs::read(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
    check!(stored == first, "render differs from {}", golden.display());
    Ok(format!("{w}x{h} PNG ({} bytes) identical: repeat, sequential, VSP1, HTTP, golden file", first.len()))
}

fn remote_equals_local(fx: &Fixture) -> Outcome {
    let t0 = Instant::now();
    let (path, ..) = golden_fixture(fx);
    let reader = open_slide(&path).unwrap();
    let header = reader.header().clone();
    let catalog = Arc::new(Catalog::open(fx.path("catalog.jsonl")).unwrap());
    let entry = vslide_ingest::CatalogEntry {
        slide_id: "golden".into(),
        path: path.clone(),
        created_at: vslide_ingest::unix_millis(),
        status: vslide_ingest::SlideStatus::Complete,
    };
    catalog.append(&entry).unwrap();
    let scans = fx.path("scans");
    std::fs::create_dir_all(&scans).unwrap();
    let (server, manager) =
        manager_serve("127.0.0.1:0", catalog, &scans, SessionOptions::default(), ServerConfig::default()).unwrap();
    let addr = server.addr();
    let mut client = Client::connect(addr).unwrap();

    check!(client.request(LIST, Vec::new()).unwrap() == canonical(&vec!["golden"]), "LIST");
    check!(
        client.request(GET_HEADER, canonical(&HeaderRequest { slide: "golden".into() })).unwrap()
            == header.to_canonical_json().unwrap(),
        "GET_HEADER"
    );
    let mut expected: HashMap<(u32, u32), Vec<u8>> = HashMap::new();
    let mut tiles = 0;
    for f in &header.fovs {
        for colour in [Colour::All, Colour::Index(0), Colour::Index(2)] {
            for level in [1u32, 2, 4] {
                for codec in [0u8, 1, 2] {
                    let planes = match reader.read_fov(f.r, f.c, colour, level) {
                        Ok(Some(p)) => p,
                        _ => reader
                            .read_fov(f.r, f.c, colour, 1)
                            .unwrap()
                            .unwrap()
                            .iter()
                            .map(|p| mignify(p, level).unwrap())
                            .collect(),
                    };
                    let local = TilePayload::encode(f.r, f.c, colour, level, &planes, codec).unwrap().to_bytes();
                    let mut req = TileRequest::new("golden", f.r, f.c, colour, level);
                    req.codec = codec;
                    let got = client.request(GET_TILE, canonical(&req)).unwrap();
                    check!(got == local, "GET_TILE {f:?} {colour:?} L{level} codec {codec}");
                    if colour == Colour::All && level == 1 && codec == 2 {
                        expected.insert((f.r, f.c), local);
                    }
                    tiles += 1;
                }
            }
        }
    }
    // header above is LINEAR (the plan default), so slabs are served
    for (lo, hi) in [(0u64, 20u64), (3, 9), (7, 8), (19, 20)] {
        let req = SlabRequest { slide: "golden".into(), lower_index: lo, upper_index: hi, level: 1, codec: 2 };
        let payloads: Vec<TilePayload> = reader
            .slab_fovs(lo, hi)
            .iter()
            .map(|f| {
                let p = reader.read_fov(f.r, f.c, Colour::All, 1).unwrap().unwrap();
                TilePayload::encode(f.r, f.c, Colour::All, 1, &p, 2).unwrap()
            })
            .collect();
        let got = client.request(GET_SLAB, canonical(&req)).unwrap();
        check!(got == vslide_remote::protocol::encode_slab(&payloads), "GET_SLAB [{lo}, {hi})");
    }

    // START_SCAN writes the same file a local session does
    let plan = ScanPlan { slide_id: "wire".into(), rows: 3, cols: 3, tile_width: 48, tile_height: 40, ..ScanPlan::default() };
    client.start_scan(&serde_json::to_vec(&plan).unwrap()).unwrap();
    let reports = manager.wait_idle();
    check!(reports.len() == 1 && reports[0].error.is_none(), "remote scan failed: {:?}", reports.first().map(|r| &r.error));
    let local_path = fx.path("wire-local.vsf");
    run_session(&plan, &local_path, &SessionOptions::default(), None).unwrap();
    check!(
        std::fs::read(scans.join("wire.vsf")).unwrap() == std::fs::read(&local_path).unwrap(),
        "START_SCAN output differs from a local session"
    );
    drop(client);

    // 64 clients x 100 requests
    let keys: Arc<Vec<((u32, u32), Vec<u8>)>> = Arc::new(expected.into_iter().collect());
    let stress = Instant::now();
    let mixups: usize = std::thread::scope(|s| {
        let handles: Vec<_> = (0..64u64)
            .map(|t| {
                let keys = keys.clone();
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
                    let mut c = Client::connect(addr).unwrap();
                    let mut bad = 0;
                    for _ in 0..100 {
                        let ((r, col), want) = &keys[rng.gen_range(0..keys.len())];
                        let mut req = TileRequest::new("golden", *r, *col, Colour::All, 1);
                        req.codec = 2;
                        match c.request(GET_TILE, canonical(&req)) {
                            Ok(got) if &got == want => {}
                            _ => bad += 1,
                        }
                    }
                    bad
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).sum()
    });
    let stress_secs = stress.elapsed().as_secs_f64();
    server.shutdown();
    check!(mixups == 0, "{mixups} mismatched replies under load");
    let total = t0.elapsed().as_secs_f64();
    check!(total < 60.0, "took {total:.1} s, limit 60 s");
    Ok(format!(
        "LIST, GET_HEADER, {tiles} GET_TILE, 4 GET_SLAB, START_SCAN byte-identical; 6400 stress requests, 0 mixups in {stress_secs:.2} s"
    ))
}

fn ingest(fx: &Fixture) -> Outcome {
    let plan = ScanPlan { slide_id: "ingest".into(), ..ScanPlan::default() };
    check!(plan.rows == 10 && plan.cols == 10, "default plan is not 10x10");
    let opts = SessionOptions { capacity: 8, writer_delay: Duration::from_millis(10), ..SessionOptions::default() };
    let path = fx.path("ingest.vsf");
    let rep = run_session(&plan, &path, &opts, None).unwrap();
    let t = &rep.timeline;
    check!(rep.error.is_none(), "session failed: {:?}", rep.error);
    check!(t.emitted == 100 && t.written == 100, "emitted {} written {}", t.emitted, t.written);
    check!(t.producer_done < t.writer_done, "producer {:?} did not finish before writer {:?}", t.producer_done, t.writer_done);
    let r = open_slide(&path).unwrap();
    r.verify_all().unwrap();
    let h = r.header();
    for f in &h.fovs {
        let planes = r.read_fov(f.r, f.c, Colour::All, 1).unwrap().unwrap();
        for p in &planes {
            let mark = synth::read_watermark(p, &h.tile, plan.overlap);
            check!(mark == Some(f.linear_index), "fov {} carries watermark {mark:?}", f.linear_index);
        }
    }
    Ok(format!(
        "100/100 tiles, watermarks intact; producer done {:.0} ms, writer done {:.0} ms",
        t.producer_done.as_secs_f64() * 1e3,
        t.writer_done.as_secs_f64() * 1e3
    ))
}

fn performance(fx: &Fixture) -> Outcome {
    let path = fx.path(&format!("rt-{}-{}.vsf", LayoutKind::Linear, CodecChain::bitshuffle_deflate()));
    let r = open_slide(&path).unwrap();
    let fovs = r.header().fovs.clone();
    let t0 = Instant::now();
    for f in &fovs {
        r.read_fov(f.r, f.c, Colour::All, 1).unwrap().unwrap();
    }
    let load_ms = t0.elapsed().as_secs_f64() * 1e3 / fovs.len() as f64;

    let comp = Compositor::new(&CacheConfig::default(), Execution::Parallel);
    for f in &fovs {
        comp.raw_tile(&r, f, 1).unwrap().unwrap();
    }
    let t1 = Instant::now();
    for f in &fovs {
        comp.raw_tile(&r, f, 1).unwrap().unwrap();
    }
    let hit_ms = t1.elapsed().as_secs_f64() * 1e3 / fovs.len() as f64;
    check!(load_ms <= 50.0, "mean decoded load {load_ms:.2} ms > 50 ms");
    check!(hit_ms <= 1.0, "mean cache hit {hit_ms:.4} ms > 1 ms");
    Ok(format!("mean decoded 256x208x3 load {load_ms:.2} ms (<= 50), cache hit {hit_ms:.4} ms (<= 1)"))
}

fn main() {
    let fx = Fixture { dir: tempfile::tempdir().unwrap() };
    let criteria: [(&str, fn(&Fixture) -> Outcome); 12] = [
        ("format roundtrip", roundtrip),
        ("compression efficacy", compression),
        ("layout arithmetic", layout_arithmetic),
        ("sparse bisection", sparse_bisection),
        ("r-tree vs brute force", rtree),
        ("rendering math", rendering_math),
        ("mip dimensions", mip),
        ("zoom manager", zoom),
        ("golden render", golden_render),
        ("remote equals local", remote_equals_local),
        ("ingest backpressure", ingest),
        ("performance smoke", performance),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(|| f(&fx))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        let (tag, msg) = match res {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        let _ = writeln!(out, "{tag} {:>2} {name} [{secs:.2} s]: {msg}", i + 1);
        let _ = out.flush();
    }
    let _ = writeln!(out, "acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
