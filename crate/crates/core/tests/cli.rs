use std::path::Path;
use std::process::{Command, Output};

use mscanet::data::{dmap, pnm};
use mscanet::density::DensityMap;
use mscanet::image::Image;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mscanet"))
        .args(args)
        .env("MSCA_THREADS", "1")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gendata(out: &Path, scenes: &str, extra: &[&str]) {
    let mut a = vec!["gendata", "--out", s(out), "--scenes", scenes, "--seed", "4"];
    if !extra.contains(&"--size") {
        a.extend_from_slice(&["--size", "32x32"]);
    }
    a.extend_from_slice(extra);
    ok(&a);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images", "density", "masks"] {
        let d = dir.join(sub);
        let mut names: Vec<_> = std::fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        // the manifest records the output path, so it is compared separately
        for p in names.into_iter().filter(|p| p.is_file() && !p.ends_with("manifest.json")) {
            out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn gendata_is_deterministic_and_handles_edge_cases() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    gendata(&a, "3", &[]);
    gendata(&b, "3", &[]);
    assert!(tree(&a) == tree(&b));
    let hash = |d: &Path| {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
        v["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
    assert!(a.join("masks/scene_00000_s8.dmap").exists());

    let empty = t.path().join("empty");
    gendata(&empty, "0", &[]);
    assert_eq!(std::fs::read_to_string(empty.join("annotations.txt")).unwrap().trim(), "");

    let ten = t.path().join("ten");
    gendata(&ten, "3", &["--heads-min", "10", "--heads-max", "10", "--size", "64x64"]);
    let records = mscanet::data::load_annotations(&ten.join("annotations.txt")).unwrap();
    assert!(records.iter().all(|r| r.points.len() == 10));
}

#[test]
fn train_eval_predict_render_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    gendata(&data, "4", &["--heads-min", "2", "--heads-max", "6"]);
    let common = ["--set", "epochs=2", "--set", "batch_size=2", "--set", "augment.crop_size=32", "--set", "model.width_scale=0.0625"];

    let full = t.path().join("full");
    let mut a = vec!["train", "--data", s(&data), "--out", s(&full), "--ablation", "full", "--val", s(&data)];
    a.extend_from_slice(&common);
    ok(&a);
    let log = std::fs::read_to_string(full.join("log.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "epoch,lr,loss_total,loss_den,loss_att1,loss_att2,loss_att3,mae,rmse");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].split(',').take(7).all(|f| !f.is_empty()));

    let bb = t.path().join("bb");
    let mut a = vec!["train", "--data", s(&data), "--out", s(&bb), "--ablation", "backbone"];
    a.extend_from_slice(&common);
    ok(&a);
    let log = std::fs::read_to_string(bb.join("log.csv")).unwrap();
    let row: Vec<&str> = log.lines().nth(1).unwrap().split(',').collect();
    assert!(row[4..7].iter().all(|f| f.is_empty()));

    let ck = full.join("checkpoint.msca");
    let (r1, r2) = (t.path().join("r1.txt"), t.path().join("r2.txt"));
    ok(&["eval", "--data", s(&data), "--checkpoint", s(&ck), "--out", s(&r1)]);
    ok(&["eval", "--data", s(&data), "--checkpoint", s(&ck), "--out", s(&r2)]);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert_eq!(std::fs::read(r1.with_extension("csv")).unwrap(), std::fs::read(r2.with_extension("csv")).unwrap());
    let report = mscanet::metrics::EvalReport::parse_text(&std::fs::read_to_string(&r1).unwrap()).unwrap();
    assert!(report.mae <= report.rmse);

    let img = data.join("images/scene_00000.pgm");
    let map = t.path().join("p.dmap");
    let printed: f64 = ok(&["predict", "--image", s(&img), "--checkpoint", s(&ck), "--out", s(&map)])
        .trim()
        .parse()
        .unwrap();
    let m = dmap::read_density(&map).unwrap();
    assert_eq!((m.width, m.height, m.stride), (16, 16, 2));
    assert!((m.sum() - printed).abs() < 1e-6 * printed.abs().max(1.0));

    let heat = t.path().join("heat.ppm");
    ok(&["render", "--map", s(&map), "--out", s(&heat), "--overlay", s(&img)]);
    let rendered = pnm::read_pnm(&heat).unwrap();
    assert_eq!((rendered.width, rendered.height, rendered.channels), (32, 32, 3));

    // a colour image cannot feed a gray model
    let rgb = t.path().join("rgb.ppm");
    pnm::write_pnm(&Image::zeros(32, 32, 3), &rgb).unwrap();
    let o = run(&["predict", "--image", s(&rgb), "--checkpoint", s(&ck), "--out", s(&map)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_map_renders_all_black() {
    let t = tempfile::tempdir().unwrap();
    let map = t.path().join("z.dmap");
    dmap::write_density(&DensityMap::zeros(5, 4, 2), &map).unwrap();
    let out = t.path().join("z.pgm");
    ok(&["render", "--map", s(&map), "--out", s(&out)]);
    let bytes = std::fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P5\n10 8\n255\n"));
    assert!(bytes[b"P5\n10 8\n255\n".len()..].iter().all(|&b| b == 0));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let missing = t.path().join("missing");
    let out = t.path().join("o");
    let o = run(&["train", "--data", s(&missing), "--out", s(&out), "--ablation", "half"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["train", "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["train", "--data", s(&missing), "--out", s(&out), "--set", "nonsense=1"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(run(&[]).status.code(), Some(1));
}
