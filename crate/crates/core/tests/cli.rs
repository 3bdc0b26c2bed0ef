use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use vessel_qca::phantom::{generate, PhantomSpec, StenosisSpec, TubeSpec};
use vessel_qca::BinaryMask;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vessel-qca"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    assert_eq!(text.trim_end().lines().count(), 1, "stderr should be one line: {text}");
    serde_json::from_str(text.trim()).expect("stderr is JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Horizontal tube with narrowings at the given `(fraction of length, severity)`.
fn bar_spec(width: u32, height: u32, radius: f64, narrowings: &[(f64, f64)]) -> PhantomSpec {
    let y = (height as f64 - 1.0) / 2.0;
    let (start, end) = (radius + 4.0, width as f64 - 5.0 - radius);
    let length = end - start;
    PhantomSpec {
        width,
        height,
        seed: 0,
        tubes: vec![TubeSpec {
            path: vec![[start, y], [end, y]],
            base_radius: radius,
            taper: 0.0,
            stenoses: narrowings
                .iter()
                .map(|&(f, severity)| StenosisSpec { position: f * length, severity, width: 1.6 * radius })
                .collect(),
        }],
    }
}

fn write_mask(dir: &Path, name: &str, mask: &BinaryMask) -> PathBuf {
    let path = dir.join(name);
    mask.save_png(&path).unwrap();
    path
}

#[test]
fn detect_empty_mask() {
    let dir = TempDir::new().unwrap();
    let m = write_mask(dir.path(), "empty.png", &BinaryMask::new(64, 48).unwrap());
    let out = run(&["detect", p(&m)]);
    assert!(out.status.success());
    let r = json(&out);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["findings"].as_array().unwrap().len(), 0);
}

#[test]
fn detect_severe_phantom() {
    let dir = TempDir::new().unwrap();
    let truth = generate(&bar_spec(300, 80, 10.0, &[(0.5, 0.8)])).unwrap();
    let m = write_mask(dir.path(), "severe.png", &truth.mask);
    let out = run(&["detect", p(&m)]);
    assert!(out.status.success());
    let findings = json(&out)["findings"].as_array().unwrap().clone();
    assert_eq!(findings.len(), 1, "{findings:?}");
    assert_eq!(findings[0]["grade"], "severe");
}

#[test]
fn tau_zero_reports_every_graded_finding() {
    let dir = TempDir::new().unwrap();
    // two dips whose minima land 7 px apart: merged under the default tau
    let spec = PhantomSpec {
        width: 200,
        height: 60,
        seed: 0,
        tubes: vec![TubeSpec {
            path: vec![[20.0, 29.5], [180.0, 29.5]],
            base_radius: 5.0,
            taper: 0.0,
            stenoses: vec![
                StenosisSpec { position: 80.0, severity: 0.6, width: 7.5 },
                StenosisSpec { position: 88.0, severity: 0.6, width: 7.5 },
            ],
        }],
    };
    let mask = generate(&spec).unwrap().mask;
    let m = write_mask(dir.path(), "pair.png", &mask);
    let merged = json(&run(&["detect", p(&m)]))["findings"].as_array().unwrap().len();
    let all = json(&run(&["detect", p(&m), "--tau", "0"]))["findings"].as_array().unwrap().len();
    assert_eq!((merged, all), (1, 2));
}

#[test]
fn detect_writes_overlay_and_debug_files() {
    let dir = TempDir::new().unwrap();
    let truth = generate(&PhantomSpec::straight_tube(200, 100)).unwrap();
    let m = write_mask(dir.path(), "s.png", &truth.mask);
    let overlay = dir.path().join("overlay.png");
    let debug = dir.path().join("debug");
    let report = dir.path().join("report.json");
    let out = run(&["detect", p(&m), "--overlay", p(&overlay), "--debug-dir", p(&debug), "--out", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());

    let img = image::open(&overlay).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (200, 100));
    let skel = vessel_qca::load_mask(debug.join("skeleton.pgm"), 128).unwrap();
    assert!(skel.is_subset_of(&truth.mask));
    let csv = std::fs::read_to_string(debug.join("profiles.csv")).unwrap();
    assert!(csv.starts_with("branch_id,index,x,y,radius\n"));
    let graph: Value = serde_json::from_str(&std::fs::read_to_string(debug.join("graph.json")).unwrap()).unwrap();
    assert!(graph["branches"].is_array());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["findings"].as_array().unwrap().len(), 1);
}

#[test]
fn detect_errors_have_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["detect", p(&dir.path().join("missing.png"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "io");

    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    let out = run(&["detect", p(&junk)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exit_code"], 3);

    let m = write_mask(dir.path(), "e.png", &BinaryMask::new(8, 8).unwrap());
    let out = run(&["detect", p(&m), "--max-radius", "0"]);
    assert_eq!(out.status.code(), Some(3));

    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn threads_do_not_change_output() {
    let dir = TempDir::new().unwrap();
    let truth = vessel_qca::phantom::generate_tree(400, 400, 11, 4).unwrap();
    let m = write_mask(dir.path(), "tree.png", &truth.mask);
    let one = run(&["detect", p(&m), "--threads", "1"]);
    let four = run(&["detect", p(&m), "--threads", "4"]);
    assert!(one.status.success() && four.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn metrics_fixtures() {
    let dir = TempDir::new().unwrap();
    // 10x10: pred covers rows 0..7 and columns 0..7 minus extras; build by counts
    let mut pred = BinaryMask::new(10, 10).unwrap();
    let mut truth = BinaryMask::new(10, 10).unwrap();
    for i in 0..100u32 {
        let (x, y) = (i % 10, i / 10);
        // 50 shared, 25 pred only, 25 truth only
        if i < 50 || (50..75).contains(&i) {
            pred.set(x, y, true);
        }
        if i < 50 || (75..100).contains(&i) {
            truth.set(x, y, true);
        }
    }
    let a = write_mask(dir.path(), "pred.png", &pred);
    let b = write_mask(dir.path(), "truth.png", &truth);
    let r = json(&run(&["metrics", p(&a), p(&b)]));
    assert_eq!(r["confusion"]["tp"], 50);
    assert_eq!(r["confusion"]["fp"], 25);
    assert_eq!(r["confusion"]["fn"], 25);
    assert_eq!(r["iou"].as_f64().unwrap(), 0.5);
    assert_eq!(r["schema_version"], 1);

    let same = json(&run(&["metrics", p(&a), p(&a)]));
    for k in ["iou", "acc", "spe", "sen", "f1"] {
        assert_eq!(same[k].as_f64().unwrap(), 1.0, "{k}");
    }
    assert!(same["bce"].as_f64().unwrap() < 1e-6);
    assert_eq!(same["dice"].as_f64().unwrap(), 0.0);

    let mut disjoint = BinaryMask::new(10, 10).unwrap();
    for i in 50..100u32 {
        disjoint.set(i % 10, i / 10, true);
    }
    let mut left = BinaryMask::new(10, 10).unwrap();
    for i in 0..50u32 {
        left.set(i % 10, i / 10, true);
    }
    let c = write_mask(dir.path(), "left.png", &left);
    let d = write_mask(dir.path(), "right.png", &disjoint);
    let r = json(&run(&["metrics", p(&c), p(&d)]));
    assert_eq!(r["iou"].as_f64().unwrap(), 0.0);
    assert_eq!(r["f1"].as_f64().unwrap(), 0.0);

    let small = write_mask(dir.path(), "small.png", &BinaryMask::new(5, 5).unwrap());
    let out = run(&["metrics", p(&a), p(&small)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "dimension_mismatch");
}

#[test]
fn metrics_prob_uses_intensities() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("p.pgm");
    let truth = dir.path().join("t.pgm");
    // truth = [1, 0], pred = [0.5, 0.5] in 8-bit form (128/255 is just above one half)
    std::fs::write(&pred, [b"P5\n2 1\n255\n".as_slice(), &[128, 128]].concat()).unwrap();
    std::fs::write(&truth, [b"P5\n2 1\n255\n".as_slice(), &[255, 0]].concat()).unwrap();
    let r = json(&run(&["metrics", p(&pred), p(&truth), "--prob"]));
    let q: f64 = 128.0 / 255.0;
    let expected = -((q.ln() + (1.0 - q).ln()) / 2.0);
    assert!((r["bce"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert!((r["dice"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(r["prob"], true);
}

#[test]
fn phantom_outputs_are_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let out = run(&["phantom", "--seed", "42", "--width", "300", "--height", "300", "--out", p(d.path())]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["tube_s42.png", "tube_s42.truth.json", "annotations.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn phantom_tree_depth_three_has_seven_tubes() {
    let dir = TempDir::new().unwrap();
    let out = run(&["phantom", "--tree", "--depth", "3", "--seed", "5", "--width", "400", "--height", "400", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree_d3_s5.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["tubes"].as_array().unwrap().len(), 7);
}

#[test]
fn default_phantom_is_detectable() {
    let dir = TempDir::new().unwrap();
    let out = run(&["phantom", "--out", p(dir.path()), "--name", "default"]);
    assert!(out.status.success());
    let det = run(&["detect", p(&dir.path().join("default.png"))]);
    assert!(det.status.success());
    assert_eq!(json(&det)["width"], 800);
}

#[test]
fn phantom_invalid_spec_exits_four() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    let mut s = PhantomSpec::straight_tube(100, 50);
    s.tubes[0].stenoses[0].severity = 1.5;
    std::fs::write(&spec, serde_json::to_string(&s).unwrap()).unwrap();
    let out = run(&["phantom", "--spec", p(&spec), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "phantom_spec");
    assert!(err["message"].as_str().unwrap().contains("severity"));

    std::fs::write(&spec, "{ not json").unwrap();
    assert_eq!(run(&["phantom", "--spec", p(&spec), "--out", p(dir.path())]).status.code(), Some(4));
}

#[test]
fn round_trip_phantom_detect_eval() {
    let dir = TempDir::new().unwrap();
    for seed in ["1", "2", "3"] {
        let out = run(&["phantom", "--seed", seed, "--lattice", "--width", "400", "--height", "400", "--out", p(dir.path())]);
        assert!(out.status.success());
    }
    let out = run(&["phantom", "--tree", "--depth", "2", "--seed", "9", "--width", "400", "--height", "400", "--out", p(dir.path())]);
    assert!(out.status.success());
    let ann = dir.path().join("annotations.json");
    let one = run(&["eval", p(dir.path()), p(&ann)]);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    let r = json(&one);
    assert_eq!(r["aggregate"]["m"], 4);
    assert_eq!(r["schema_version"], 1);
    assert!(r["missing"].as_array().unwrap().is_empty());

    let four = run(&["eval", p(dir.path()), p(&ann), "--threads", "4"]);
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn eval_identity_and_count_errors() {
    let dir = TempDir::new().unwrap();
    let three = generate(&bar_spec(700, 80, 10.0, &[(0.2, 0.6), (0.5, 0.8), (0.8, 0.6)])).unwrap();
    let five = generate(&bar_spec(900, 80, 10.0, &[(0.1, 0.6), (0.3, 0.8), (0.5, 0.6), (0.7, 0.8), (0.9, 0.6)])).unwrap();
    write_mask(dir.path(), "a.png", &three.mask);
    write_mask(dir.path(), "b.png", &five.mask);

    // labels = the tool's own detections
    let detected = |name: &str| -> Vec<Value> {
        json(&run(&["detect", p(&dir.path().join(name))]))["findings"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| serde_json::json!({"x": f["x"], "y": f["y"]}))
            .collect()
    };
    let (a, b) = (detected("a.png"), detected("b.png"));
    assert_eq!((a.len(), b.len()), (3, 5));

    let ann = dir.path().join("ann.json");
    std::fs::write(&ann, serde_json::json!({"a.png": a, "b": b}).to_string()).unwrap();
    let r = json(&run(&["eval", p(dir.path()), p(&ann)]));
    assert_eq!(r["aggregate"]["tpr"].as_f64().unwrap(), 1.0);
    assert_eq!(r["aggregate"]["ppv"].as_f64().unwrap(), 1.0);
    assert_eq!(r["aggregate"]["armse"].as_f64().unwrap(), 0.0);

    // one extra label on the first image: counts (3,4) and (5,5)
    let mut a4 = a.clone();
    a4.push(serde_json::json!({"x": 5, "y": 5}));
    std::fs::write(&ann, serde_json::json!({"a.png": a4, "b": b}).to_string()).unwrap();
    let r = json(&run(&["eval", p(dir.path()), p(&ann), "--gamma", "10"]));
    assert!((r["aggregate"]["armse"].as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-9);
    assert!((r["aggregate"]["rrmse"].as_f64().unwrap() - 0.03125f64.sqrt()).abs() < 1e-9);
    assert_eq!(r["aggregate"]["fn"], 1);
}

#[test]
fn eval_reports_missing_masks() {
    let dir = TempDir::new().unwrap();
    write_mask(dir.path(), "here.png", &BinaryMask::new(32, 32).unwrap());
    let ann = dir.path().join("ann.json");
    std::fs::write(&ann, r#"{"here.png": [], "gone.png": [{"x": 1, "y": 2}]}"#).unwrap();
    let out = run(&["eval", p(dir.path()), p(&ann)]);
    assert_ne!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["missing"], serde_json::json!(["gone.png"]));
    assert_eq!(r["aggregate"]["m"], 1);
    assert_eq!(stderr_json(&out)["error"], "missing_masks");
}
