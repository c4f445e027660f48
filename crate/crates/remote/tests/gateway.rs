mod common;

use std::io::Read;

use vslide_core::compositor::{render_viewport, RenderOverrides, RenderParams, RgbImage, ViewportRect};
use vslide_core::container::open_slide;
use vslide_core::model::fov_bounds;
use vslide_core::spatial::RTree;
use vslide_remote::{Gateway, GatewayConfig, ServerConfig};

fn get(url: &str) -> (u16, String, Vec<u8>) {
    let resp = match ureq::get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::Status(_, r)) => r,
        Err(e) => panic!("{url}: {e}"),
    };
    let status = resp.status();
    let ctype = resp.content_type().to_string();
    let mut body = Vec::new();
    resp.into_reader().read_to_end(&mut body).unwrap();
    (status, ctype, body)
}

#[test]
fn gateway_serves_the_dealer_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (dealer, slides) = common::serve_all(dir.path(), ServerConfig::default());
    let gw = Gateway::bind("127.0.0.1:0", dealer.addr(), GatewayConfig::default())
        .unwrap()
        .spawn()
        .unwrap();
    let base = format!("http://{}", gw.addr());
    let local = open_slide(&slides[0].1).unwrap();

    let (status, ctype, body) = get(&format!("{base}/slides"));
    assert_eq!((status, ctype.as_str()), (200, "application/json"));
    assert_eq!(body, br#"["linear","packed","pertile"]"#);

    let (status, _, body) = get(&format!("{base}/slides/linear/header"));
    assert_eq!(status, 200);
    assert_eq!(body, local.header().to_canonical_json().unwrap());

    // render: same PNG as the local compositor with the same parameters
    let params_json = r#"{"gamma":1.5,"status":[1,0]}"#;
    let (status, ctype, body) = get(&format!(
        "{base}/slides/linear/render?x0=-4&y0=2&x1=120&y1=70&w=93&h=51&level=2&params={}",
        url_escape(params_json)
    ));
    assert_eq!((status, ctype.as_str()), (200, "image/png"), "{}", String::from_utf8_lossy(&body));
    let mut p = serde_json::from_str::<RenderOverrides>(params_json)
        .unwrap()
        .apply(RenderParams::defaults(2));
    p.level = 2;
    let tree = RTree::build(local.header().fov_rects());
    let vp = ViewportRect::new(-4.0, 120.0, 2.0, 70.0).unwrap();
    let expect = render_viewport(&local, &tree, &vp, 93, 51, &p).unwrap();
    assert_eq!(body, expect.to_png().unwrap());

    // tile: one output pixel per level sample
    let (status, _, body) = get(&format!("{base}/slides/linear/tile/2/3/4.png?pipeline=invert"));
    assert_eq!(status, 200);
    let img = RgbImage::from_png(&body).unwrap();
    assert_eq!((img.width(), img.height()), (8, 6));
    let f = *local.header().fov(2, 3).unwrap();
    let b = fov_bounds(&f, &local.header().tile);
    let mut p = RenderParams::defaults(2);
    p.level = 4;
    p.pipeline = "invert".into();
    let one = RTree::build(vec![(b, f.linear_index)]);
    let expect = render_viewport(&local, &one, &ViewportRect::from_rect(&b).unwrap(), 8, 6, &p).unwrap();
    assert_eq!(img, expect);
}

fn url_escape(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

#[test]
fn gateway_errors_map_to_http_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let (dealer, _) = common::serve_all(dir.path(), ServerConfig::default());
    let cfg = GatewayConfig {
        max_pixels: 10_000,
        ..GatewayConfig::default()
    };
    let gw = Gateway::bind("127.0.0.1:0", dealer.addr(), cfg).unwrap().spawn().unwrap();
    let base = format!("http://{}", gw.addr());
    let vp = "x0=0&y0=0&x1=10&y1=10&w=10&h=10";
    let cases = [
        ("/nowhere".to_string(), 404),
        ("/slides/missing/header".into(), 404),
        (format!("/slides/missing/render?{vp}"), 404),
        ("/slides/linear/tile/1/1/1.png".into(), 404),
        ("/slides/linear/tile/0/0/1.jpg".into(), 404),
        ("/slides/linear/render?x0=0&y0=0&x1=10&y1=10&w=10".into(), 400),
        (format!("/slides/linear/render?{vp}&params=%7Bnot%20json"), 400),
        (format!("/slides/linear/render?{vp}&params=%7B%22gama%22%3A1%7D"), 400),
        (format!("/slides/linear/render?{vp}&params=%7B%22gamma%22%3A-1%7D"), 400),
        (format!("/slides/linear/render?{vp}&level=3"), 400),
        (format!("/slides/linear/render?{vp}&pipeline=sobel"), 400),
        ("/slides/linear/render?x0=10&y0=0&x1=0&y1=10&w=10&h=10".into(), 400),
        ("/slides/linear/render?x0=0&y0=0&x1=10&y1=10&w=1000&h=1000".into(), 400),
        ("/slides/linear/tile/x/0/1.png".into(), 400),
        (format!("/slides/linear/render?{vp}"), 200),
    ];
    for (path, want) in cases {
        let (status, _, body) = get(&format!("{base}{path}"));
        assert_eq!(status, want, "{path}: {}", String::from_utf8_lossy(&body));
        if want != 200 {
            let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
            assert!(v["error"].is_string());
        }
    }

    let resp = ureq::request("OPTIONS", &format!("{base}/slides")).call().unwrap();
    assert_eq!(resp.status(), 204);
    assert_eq!(resp.header("Access-Control-Allow-Origin"), Some("*"));
    let resp = ureq::get(&format!("{base}/slides")).call().unwrap();
    assert_eq!(resp.header("Access-Control-Allow-Origin"), Some("*"));

    // dealer gone: upstream failures are 502, not hangs
    dealer.shutdown();
    let (status, _, _) = get(&format!("{base}/slides"));
    assert_eq!(status, 502);
    gw.shutdown();
}
