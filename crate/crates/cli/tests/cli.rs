mod common;

use std::fs;
use std::path::Path;

use depthkit::detection_eval::{mean_ap, parse_class_table, parse_detections, parse_ground_truth, VocParams};
use depthkit::netpbm::{decode, encode_pgm16, Netpbm};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{depthkit, depthkit_env, fixture};

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn gray_midpoint_and_header_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("flat.pgm");
    fs::write(&input, encode_pgm16(7, 5, &[5000; 35])).unwrap();
    let out = tmp.path().join("out");
    let r = depthkit(["encode", &s(&input), "--mode", "gray", "--dmin", "0", "--dmax", "10", "--out", &s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("valid=1.0000 min=5.0000 max=5.0000"), "{}", r.stdout);
    match decode(&fs::read(out.join("flat.gray.pgm")).unwrap()).unwrap() {
        Netpbm::Pgm { maxval, raster } => {
            assert_eq!((maxval, raster.width, raster.height), (255, 7, 5));
            assert!(raster.data.iter().all(|&v| v == 128));
        }
        other => panic!("{other:?}"),
    }
    let r = depthkit(["encode", &s(&input), "--mode", "jet", "--dmin", "0", "--dmax", "10", "--out", &s(&out)]);
    assert_eq!(r.code, 0);
    let jet = decode(&fs::read(out.join("flat.jet.ppm")).unwrap()).unwrap();
    assert_eq!((jet.width(), jet.height(), jet.channels()), (7, 5, 3));
}

#[test]
fn hdha_requires_intrinsics() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("d.pgm");
    fs::write(&input, encode_pgm16(4, 4, &[1000; 16])).unwrap();
    let out = s(&tmp.path().join("o"));
    let r = depthkit(["encode", &s(&input), "--mode", "hdha", "--out", &out]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("intrinsics"), "{}", r.stderr);
    let r = depthkit(["encode", &s(&input), "--mode", "hdha", "--intrinsics", "missing_cam.json", "--out", &out]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("missing_cam.json"), "{}", r.stderr);
}

#[test]
fn hdha_with_stats_round() {
    let tmp = tempfile::tempdir().unwrap();
    let cam = common::cam();
    let input = tmp.path().join("scene.pfm");
    common::write_pfm(&input, &common::floor_wall(&cam));
    let camf = tmp.path().join("cam.json");
    fs::write(&camf, serde_json::to_string(&cam).unwrap()).unwrap();
    let out = tmp.path().join("o");
    let r = depthkit(["encode", &s(&input), "--mode", "hdha", "--intrinsics", &s(&camf), "--compute-stats", "--out", &s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("gravity=("), "{}", r.stdout);
    let stats = s(&out.join("stats.json"));
    let out2 = tmp.path().join("o2");
    let r = depthkit(["encode", &s(&input), "--mode", "hdha", "--intrinsics", &s(&camf), "--stats", &stats, "--out", &s(&out2)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let z = decode(&fs::read(out2.join("scene.hdha.norm.pfm")).unwrap()).unwrap();
    assert_eq!((z.width(), z.height(), z.channels()), (64, 48, 3));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out2.join("scene.hdha.json")).unwrap()).unwrap();
    assert_eq!(meta["image_scale"], 600);
    assert_eq!(meta["resampled"], false);
}

#[test]
fn malformed_depth_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.pgm");
    fs::write(&input, b"P5\n4 4\n65535\n\x00\x01").unwrap();
    let r = depthkit(["encode", &s(&input), "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("byte"), "{}", r.stderr);
    let r = depthkit(["encode", "no_such_file.pfm", "--out", &s(&tmp.path().join("o"))]);
    assert_eq!(r.code, 2);
}

#[test]
fn arch_reports() {
    let r = depthkit(["arch", "--variant", "baseline", "--backbone", "vgg16", "--report", "params"]);
    assert_eq!(r.code, 0);
    let footer = r.stdout.lines().last().unwrap();
    let total: f64 = footer.split(',').nth(4).unwrap().parse().unwrap();
    assert!((total / 137e6 - 1.0).abs() < 0.15, "{footer}");

    let r = depthkit(["arch", "--variant", "raw-LC", "--rois", "300", "--report", "shapes"]);
    assert!(r.stdout.lines().any(|l| l == "head_input,300x8192"));

    assert_eq!(depthkit(["arch", "--variant", "raw-XX"]).code, 3);
    assert_eq!(depthkit(["arch", "--input-hw", "600"]).code, 3);
}

#[test]
fn arch_config_file_and_dot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("g.json");
    fs::write(&cfg, r#"{"variant":"proc-EC","backbone":"resnet101","num_rois":128}"#).unwrap();
    let out = tmp.path().join("o");
    let r = depthkit(["arch", "--config", &s(&cfg), "--report", "shapes", "--out", &s(&out)]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.lines().any(|l| l == "reduced,1024x38x50"), "{}", r.stdout);
    assert!(r.stdout.lines().any(|l| l == "head_input,128x2048"));
    let dot = fs::read_to_string(out.join("proc-EC_resnet101.dot")).unwrap();
    assert!(dot.starts_with("digraph \"proc-EC/resnet101\""));
    assert!(out.join("proc-EC_resnet101.params.csv").is_file());
    assert_eq!(depthkit(["arch", "--config", &s(&cfg), "--variant", "raw-LC"]).code, 3);
    fs::write(&cfg, r#"{"variant":"nope","backbone":"vgg16"}"#).unwrap();
    assert_eq!(depthkit(["arch", "--config", &s(&cfg)]).code, 3);
}

#[test]
fn arch_forward_is_repeatable() {
    let a = depthkit(["arch", "--variant", "proc-EC", "--forward", "--seed", "1"]);
    let b = depthkit(["arch", "--variant", "proc-EC", "--forward", "--seed", "1"]);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.contains("forward cls_scores 4x21"));
    let c = depthkit_env(["arch", "--variant", "proc-EC", "--forward", "--seed", "1"], &[("DEPTHKIT_THREADS", "1")]);
    assert_eq!(a.stdout, c.stdout);
}

fn write_eval_files(dir: &Path, gt: &str, dets: &str) {
    fs::write(dir.join("classes.json"), r#"["chair","table","lamp"]"#).unwrap();
    fs::write(dir.join("gt.jsonl"), gt).unwrap();
    fs::write(dir.join("dets.jsonl"), dets).unwrap();
}

fn eval(dir: &Path, metric: &str, extra: &[&str]) -> common::Run {
    let mut args = vec![
        "eval".to_string(),
        "--metric".into(),
        metric.into(),
        "--classes".into(),
        s(&dir.join("classes.json")),
        "--gt".into(),
        s(&dir.join("gt.jsonl")),
        "--dets".into(),
        s(&dir.join("dets.jsonl")),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    depthkit(args)
}

#[test]
fn eval_perfect_and_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = "{\"image_id\":\"a\",\"class\":\"chair\",\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10}\n\
              {\"image_id\":\"b\",\"class\":\"table\",\"x1\":5,\"y1\":5,\"x2\":50,\"y2\":40}\n";
    let dets = gt.replace("\"x1\"", "\"score\":0.9,\"x1\"");
    write_eval_files(tmp.path(), gt, &dets);
    let r = eval(tmp.path(), "voc", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.lines().any(|l| l == "mAP,1.0000"), "{}", r.stdout);
    assert!(r.stdout.contains("lamp,n/a"));
    let r = eval(tmp.path(), "coco", &[]);
    assert!(r.stdout.lines().any(|l| l == "AP,1.0000"), "{}", r.stdout);
    let d = s(&tmp.path().join("dets.jsonl"));
    let r = eval(tmp.path(), "confdiff", &["--dets-b", &d]);
    assert_eq!(r.code, 0);
    for row in r.stdout.lines().skip(1) {
        assert!(row.split(',').skip(1).all(|v| v == "0"), "{row}");
    }
    assert_eq!(eval(tmp.path(), "confdiff", &[]).code, 3);
    assert_eq!(eval(tmp.path(), "voc", &["--iou", "1.5"]).code, 3);
}

#[test]
fn eval_malformed_line_reports_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = "{\"image_id\":\"a\",\"class\":\"chair\",\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10}\n";
    let dets = "{\"image_id\":\"a\",\"class\":\"chair\",\"score\":0.5,\"x1\":0,\"y1\":0,\"x2\":10,\"y2\":10}\n{\"image_id\": oops\n";
    write_eval_files(tmp.path(), gt, dets);
    let r = eval(tmp.path(), "voc", &[]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("line 2"), "{}", r.stderr);
    assert!(r.stderr.contains("dets.jsonl"), "{}", r.stderr);
}

#[test]
fn eval_random_fixture_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = StdRng::seed_from_u64(100);
    let names = ["chair", "table", "lamp"];
    let mut gt = String::new();
    let mut dets = String::new();
    let rec = |img: usize, c: usize, x: f64, y: f64, w: f64, h: f64| {
        format!("\"image_id\":\"im{img}\",\"class\":\"{}\",\"x1\":{x},\"y1\":{y},\"x2\":{},\"y2\":{}", names[c], x + w, y + h)
    };
    let mut boxes = Vec::new();
    for _ in 0..40 {
        let b = (rng.gen_range(0..5), rng.gen_range(0..3), rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0), rng.gen_range(5.0..80.0), rng.gen_range(5.0..80.0));
        gt.push_str(&format!("{{{},\"difficult\":{}}}\n", rec(b.0, b.1, b.2, b.3, b.4, b.5), rng.gen_bool(0.1)));
        boxes.push(b);
    }
    for i in 0..100 {
        let (img, c, x, y, w, h) = if i < 60 {
            let b = boxes[i % boxes.len()];
            (b.0, if rng.gen_bool(0.8) { b.1 } else { rng.gen_range(0..3) }, b.2 + rng.gen_range(-4.0..4.0), b.3 + rng.gen_range(-4.0..4.0), b.4, b.5)
        } else {
            (rng.gen_range(0..5), rng.gen_range(0..3), rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0), rng.gen_range(5.0..80.0), rng.gen_range(5.0..80.0))
        };
        dets.push_str(&format!("{{{},\"score\":{}}}\n", rec(img, c, x, y, w, h), rng.gen_range(0.0..1.0)));
    }
    write_eval_files(tmp.path(), &gt, &dets);
    let r = eval(tmp.path(), "voc", &[]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    let classes = parse_class_table(r#"["chair","table","lamp"]"#).unwrap();
    let m = mean_ap(
        &parse_detections(&dets, &classes).unwrap(),
        &parse_ground_truth(&gt, &classes).unwrap(),
        &classes.names,
        &VocParams::default(),
    );
    assert_eq!(r.stdout, m.to_csv());
}

#[test]
fn analyze_single_box_and_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let depth = tmp.path().join("depth");
    fs::create_dir_all(&depth).unwrap();
    fs::write(depth.join("a.pgm"), encode_pgm16(8, 8, &[2500; 64])).unwrap();
    fs::write(tmp.path().join("classes.json"), r#"["sofa bed","chair"]"#).unwrap();
    let gt = tmp.path().join("gt.jsonl");
    fs::write(&gt, "{\"image_id\":\"a\",\"class\":\"sofa bed\",\"x1\":1,\"y1\":1,\"x2\":5,\"y2\":4}\n").unwrap();
    let out = tmp.path().join("o");
    let args = |out: &Path| {
        vec![
            "analyze".to_string(),
            "--gt".into(),
            s(&gt),
            "--classes".into(),
            s(&tmp.path().join("classes.json")),
            "--depth-dir".into(),
            s(&depth),
            "--out".into(),
            s(out),
        ]
    };
    let r = depthkit(args(&out));
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.starts_with("sofa bed: samples=1 skipped=0"), "{}", r.stdout);
    let csv = fs::read_to_string(out.join("sofa_bed.heatmap.csv")).unwrap();
    assert_eq!(csv, "x_edges,12,12\ny_edges,2.5,2.5\n1\n");
    let samples = fs::read_to_string(out.join("sofa_bed.samples.jsonl")).unwrap();
    assert_eq!(samples, "{\"image_id\":\"a\",\"class_id\":0,\"area\":12.0,\"mean_depth\":2.5}\n");
    let c = s(&out.join("sofa_bed.heatmap.csv"));
    let r = depthkit(["analyze", "--compare", &c, &c]);
    assert!(r.stdout.starts_with("similarity=1.000000"), "{}", r.stdout);

    fs::write(&gt, "{\"image_id\":\"zz9\",\"class\":\"chair\",\"x1\":1,\"y1\":1,\"x2\":5,\"y2\":4}\n").unwrap();
    let r = depthkit(args(&out));
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("zz9"), "{}", r.stderr);
}

#[test]
fn fixture_confusion_row_sums() {
    let dir = fixture("depth_vs_rgb");
    let r = depthkit([
        "eval",
        "--metric",
        "confusion",
        "--classes",
        &s(&dir.join("classes.json")),
        "--gt",
        &s(&dir.join("gt.jsonl")),
        "--dets",
        &s(&dir.join("dets_rgb.jsonl")),
    ]);
    assert_eq!(r.code, 0);
    let gt = fs::read_to_string(dir.join("gt.jsonl")).unwrap();
    for row in r.stdout.lines().skip(1) {
        let mut cols = row.split(',');
        let name = cols.next().unwrap();
        let sum: u64 = cols.map(|v| v.parse::<u64>().unwrap()).sum();
        let n = gt.lines().filter(|l| l.contains(&format!("\"class\": \"{name}\""))).count() as u64;
        assert_eq!(sum, n, "{name}");
    }
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(depthkit(["encode"]).code, 3);
    assert_eq!(depthkit(["frobnicate"]).code, 3);
    let r = depthkit_env(["arch"], &[("DEPTHKIT_THREADS", "0")]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("DEPTHKIT_THREADS"));
    let r = depthkit(["encode", "--help"]);
    assert_eq!(r.code, 0);
    for needle in ["[default: 600]", "[default: gray]", "[default: 25]", "never resampled"] {
        assert!(r.stdout.contains(needle), "{needle} missing from\n{}", r.stdout);
    }
    let r = depthkit(["eval", "--help"]);
    for needle in ["[default: 300]", "[default: 0.5]"] {
        assert!(r.stdout.contains(needle), "{needle}");
    }
}
