use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn vslide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vslide"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vslide(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn code(args: &[&str]) -> i32 {
    vslide(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small slide: 3x4 fovs of 52x64, 2 colours.
fn scan(dir: &Path, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let out = dir.join(format!("{name}.vsf"));
    let mut args = vec![
        "scan-sim", "--slide-id", name, "--rows", "3", "--cols", "4", "--tile-width", "64",
        "--tile-height", "52", "--colours", "2", "--out", s(&out),
    ];
    args.extend_from_slice(extra);
    ok_json(&args);
    out
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["info"]), 1);
    assert_eq!(code(&["scan-sim", "--bogus"]), 1);
    assert_eq!(code(&["scan-sim", "--overlap", "0.9"]), 1);
    assert_eq!(code(&["scan-sim", "--layout", "diagonal"]), 1);
    assert_eq!(code(&["scan-sim", "--slide-id", "../x"]), 1);
    assert_eq!(code(&["info", s(&dir.path().join("missing.vsf"))]), 3);
    assert_eq!(code(&["--config", s(&dir.path().join("missing.json")), "info", "x"]), 3);

    let garbage = dir.path().join("garbage.vsf");
    std::fs::write(&garbage, b"not a slide at all, just bytes").unwrap();
    assert_eq!(code(&["info", s(&garbage)]), 2);

    let out = dir.path().join("nowhere").join("x.vsf");
    assert_eq!(code(&["scan-sim", "--rows", "1", "--cols", "1", "--out", s(&out)]), 3);
}

#[test]
fn info_matches_the_analytic_chunk_count() {
    let dir = tempfile::tempdir().unwrap();
    for layout in ["packed2d", "linear", "per-tile"] {
        let p = scan(dir.path(), layout, &["--layout", layout, "--mip-levels", "1,4"]);
        let info = ok_json(&["info", s(&p), "--verify"]);
        let h = &info["header"];
        let n = |v: &Value| v.as_u64().unwrap();
        let (rows, cols, nw) = (n(&h["mosaic"]["rows"]), n(&h["mosaic"]["cols"]), n(&h["tile"]["colours"]));
        let (th, tw) = (n(&h["tile"]["height"]), n(&h["tile"]["width"]));
        let level1 = match layout {
            "packed2d" => {
                let (ch, cw) = (n(&h["chunk"]["h"]), n(&h["chunk"]["w"]));
                (rows * nw * th).div_ceil(ch) * (cols * tw).div_ceil(cw)
            }
            _ => rows * cols * nw,
        };
        let levels = info["levels"].as_array().unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(n(&levels[0]["chunks"]), level1, "{layout}");
        // mip levels store one chunk per plane
        assert_eq!(n(&levels[1]["chunks"]), rows * cols * nw, "{layout}");
        assert_eq!((n(&levels[1]["tile_width"]), n(&levels[1]["tile_height"])), (16, 13));
        assert_eq!(n(&info["file_bytes"]), std::fs::metadata(&p).unwrap().len());
    }
}

#[test]
fn truncated_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = scan(dir.path(), "cut", &[]);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
    let out = vslide(&["info", s(&p)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cut.vsf"));
}

#[test]
fn rate_throttles_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("slow.vsf");
    let rep = ok_json(&[
        "scan-sim", "--rows", "2", "--cols", "5", "--tile-width", "32", "--tile-height", "26", "--rate", "50",
        "--out", s(&out),
    ]);
    // tile k is due at (k + 1) / rate
    assert!(rep["producer_seconds"].as_f64().unwrap() >= 0.2 - 1e-3, "{rep}");
    assert_eq!(rep["written"], 10);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("vslide.json");
    std::fs::write(
        &cfg,
        r#"{"scan-sim": {"rows": 2, "cols": 3, "tile-width": 32, "tile_height": 26, "colours": 1},
            "cache": {"tile_bytes": 1048576}}"#,
    )
    .unwrap();
    let out = dir.path().join("c.vsf");
    let rep = ok_json(&["--config", s(&cfg), "scan-sim", "--cols", "4", "--out", s(&out)]);
    assert_eq!(rep["tiles"], 8);

    std::fs::write(&cfg, r#"{"scan-sim": {"rowz": 2}}"#).unwrap();
    assert_eq!(code(&["--config", s(&cfg), "scan-sim"]), 1);
}

#[test]
fn sequential_flag_writes_the_same_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = scan(dir.path(), "same", &["--layout", "packed2d"]);
    let bytes_a = std::fs::read(&a).unwrap();
    let c = dir.path().join("seq2.vsf");
    ok_json(&[
        "--sequential", "scan-sim", "--slide-id", "same", "--rows", "3", "--cols", "4", "--tile-width", "64",
        "--tile-height", "52", "--colours", "2", "--layout", "packed2d", "--out", s(&c),
    ]);
    assert_eq!(std::fs::read(&c).unwrap(), bytes_a);
}

#[test]
fn render_is_black_outside_the_mosaic() {
    let dir = tempfile::tempdir().unwrap();
    let p = scan(dir.path(), "r", &[]);
    let png = dir.path().join("out.png");
    let rep = ok_json(&[
        "render", s(&p), "--x0", "-500", "--x1", "-100", "--y0", "0", "--y1", "100", "--width", "40", "--png", s(&png),
    ]);
    assert_eq!(rep["height"], 10);
    let img = vslide_core::compositor::RgbImage::from_png(&std::fs::read(&png).unwrap()).unwrap();
    assert!(img.is_black());

    ok_json(&["render", s(&p), "--width", "64", "--png", s(&png)]);
    let img = vslide_core::compositor::RgbImage::from_png(&std::fs::read(&png).unwrap()).unwrap();
    assert!(!img.is_black());

    assert_eq!(code(&["render", s(&p), "--width", "8"]), 1, "--png is required");
    assert_eq!(code(&["render", s(&p), "--gamma", "-1", "--png", s(&png)]), 1);
    assert_eq!(code(&["render", s(&p), "--status", "1,0,1", "--png", s(&png)]), 1, "slide has 2 colours");
    assert_eq!(code(&["render", s(&p), "--pipeline", "nope", "--png", s(&png)]), 1);
}

#[test]
fn mip_adds_levels_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cam.vsf");
    ok_json(&[
        "scan-sim", "--rows", "1", "--cols", "2", "--tile-width", "1392", "--tile-height", "1040", "--colours", "1",
        "--out", s(&out),
    ]);
    let rep = ok_json(&["mip", s(&out), "--levels", "16"]);
    let l16 = rep["levels"].as_array().unwrap().iter().find(|l| l["level"] == 16).unwrap().clone();
    assert_eq!((l16["tile_width"].as_u64(), l16["tile_height"].as_u64()), (Some(87), Some(65)));
    let before = std::fs::read(&out).unwrap();
    ok_json(&["mip", s(&out), "--levels", "16"]);
    assert_eq!(std::fs::read(&out).unwrap(), before);
    assert_eq!(code(&["mip", s(&out), "--levels", "3"]), 1);
    ok_json(&["info", s(&out), "--verify"]);
}

#[test]
fn bench_layouts_agree() {
    let rep = ok_json(&[
        "bench", "--rows", "3", "--cols", "3", "--tile-width", "32", "--tile-height", "26", "--random-reads", "8",
    ]);
    assert_eq!(rep["digests_agree"], true);
    assert_eq!(rep["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn serve_renders_remotely_and_stops_on_sigterm() {
    let dir = tempfile::tempdir().unwrap();
    let p = scan(dir.path(), "live", &["--mip-levels", "1,2"]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_vslide"))
        .args(["serve", s(&p), "--listen", "127.0.0.1:0", "--http", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let start: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    let listen = start["listen"].as_str().unwrap().to_string();
    let http = start["http"].as_str().unwrap().to_string();

    let local = dir.path().join("local.png");
    let remote = dir.path().join("remote.png");
    let view = ["--x0", "10", "--x1", "200", "--y0", "5", "--y1", "120", "--width", "95"];
    let mut a = vec!["render", s(&p), "--png", s(&local)];
    a.extend_from_slice(&view);
    ok_json(&a);
    let url = format!("vsp://{listen}/live");
    let mut b = vec!["render", url.as_str(), "--png", s(&remote)];
    b.extend_from_slice(&view);
    ok_json(&b);
    assert_eq!(std::fs::read(&local).unwrap(), std::fs::read(&remote).unwrap());
    assert_eq!(code(&["render", &format!("vsp://{listen}/absent"), "--png", s(&remote)]), 2);

    let body = ureq::get(&format!("http://{http}/slides")).call().unwrap().into_string().unwrap();
    let slides: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(slides, serde_json::json!(["live"]));

    let killed = Command::new("kill").args(["-TERM", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert!(status.success(), "{status}");
    let stop: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(stop["stopped"], true);
}

#[test]
fn serve_argument_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["serve"]), 1);
    assert_eq!(code(&["manager", "--catalog", s(&dir.path().join("c.jsonl"))]), 1);
    assert_eq!(code(&["serve", "x.vsf", "--output-dir", "."]), 1);
    assert_eq!(code(&["serve", s(&dir.path().join("missing.vsf"))]), 3);
}

#[test]
fn manager_accepts_scans_over_the_wire() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("slides");
    std::fs::create_dir(&out_dir).unwrap();
    let catalog = dir.path().join("catalog.jsonl");
    let mut child = Command::new(env!("CARGO_BIN_EXE_vslide"))
        .args(["manager", "--catalog", s(&catalog), "--output-dir", s(&out_dir), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let start: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(start["scans"], true);
    let listen = start["listen"].as_str().unwrap().to_string();

    let mut client = vslide_remote::Client::connect(listen.as_str()).unwrap();
    assert!(client.list().unwrap().is_empty());
    let plan = br#"{"slide_id": "wire", "rows": 2, "cols": 2, "tile_width": 32, "tile_height": 26}"#;
    let entry = client.start_scan(plan).unwrap();
    assert_eq!(entry["status"], "scanning");
    assert!(client.start_scan(plan).is_err(), "duplicate id conflicts");
    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(20);
    while client.list().unwrap().is_empty() {
        assert!(std::time::Instant::now() < deadline, "scan never completed");
        std::thread::sleep(std::time::Duration::from_millis(20));
    }
    assert_eq!(client.header("wire").unwrap().fovs.len(), 4);
    drop(client);

    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(child.wait().unwrap().success());
    let stop: Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(stop["sessions"], 1);
    assert_eq!(stop["failed_sessions"], 0);
    assert!(out_dir.join("wire.vsf").exists());
}

#[test]
fn local_dir_cache_copies_the_slide_first() {
    let dir = tempfile::tempdir().unwrap();
    let p = scan(dir.path(), "far", &[]);
    let plain = dir.path().join("plain.png");
    ok_json(&["render", s(&p), "--width", "50", "--png", s(&plain)]);

    let local = dir.path().join("local-cache");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, serde_json::json!({ "cache": { "local_dir": local } }).to_string()).unwrap();
    let cached = dir.path().join("cached.png");
    ok_json(&["--config", s(&cfg), "render", s(&p), "--width", "50", "--png", s(&cached)]);
    assert_eq!(std::fs::read(local.join("far.vsf")).unwrap(), std::fs::read(&p).unwrap());
    assert_eq!(std::fs::read(&cached).unwrap(), std::fs::read(&plain).unwrap());
}
