mod common;

use std::fs;

use common::{blob_box, blob_image, blob_weights, fixture, p, run, stdout};
use faceboxes::core::bbox::{jaccard, BBox};
use faceboxes::formats::{format_annotations, read_detections, AnnotatedImage};
use faceboxes::model::save_weights;
use faceboxes::ppm;

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["anchors", "640"]).status.code(), Some(1));
    assert_eq!(run(&["bench", "--reps", "2"]).status.code(), Some(1));
    assert_eq!(run(&["anchors", "64", "64", "--threads", "0"]).status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.fbxw");
    assert_eq!(run(&["anchors", "100", "100"]).status.code(), Some(2));
    let img = dir.path().join("img.ppm");
    ppm::write(&img, &blob_image(128, 128, &[])).unwrap();
    assert_eq!(run(&["detect", "--model", p(&missing), p(&img)]).status.code(), Some(2));
    let junk = dir.path().join("junk.fbxw");
    fs::write(&junk, b"not a model").unwrap();
    assert_eq!(run(&["detect", "--model", p(&junk), p(&img)]).status.code(), Some(2));
}

#[test]
fn anchors_header_reports_count() {
    let out = run(&["anchors", "640", "640"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "anchors w 640 h 640 count 8525");
    assert_eq!(text.lines().count(), 8526);
}

#[test]
fn init_weights_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (path, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        assert_eq!(run(&["init-weights", "--seed", seed, "--out", p(path)]).status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn eval_on_bundled_fixture_gives_half_ap() {
    let out = run(&[
        "eval",
        "--annotations",
        p(&fixture("eval/annotations.txt")),
        "--detections",
        p(&fixture("eval/detections.det")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let summary = text.lines().find(|l| l.starts_with("summary")).unwrap();
    assert!(summary.contains("ap=0.500000"), "{summary}");
    assert!(summary.contains("tp=1") && summary.contains("fp=1") && summary.contains("faces=2"));
    assert!(summary.contains("tpr@1000=0.500000"), "{summary}");
}

#[test]
fn detect_writes_one_file_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.fbxw");
    assert_eq!(run(&["init-weights", "--seed", "3", "--out", p(&model)]).status.code(), Some(0));
    let images: Vec<_> = (0..3)
        .map(|i| {
            let path = dir.path().join(format!("img{i}.ppm"));
            ppm::write(&path, &blob_image(640, 640, &[(200.0 + 50.0 * i as f32, 300.0)])).unwrap();
            path
        })
        .collect();
    let out_dir = dir.path().join("out");
    let mut args = vec!["detect", "--model", p(&model), "--out-dir", p(&out_dir), "--threads", "2"];
    args.extend(images.iter().map(|i| p(i)));
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout(&out);
    for stage in ["preprocess", "forward", "postprocess"] {
        assert!(report.contains(&format!("timing stage={stage} n=3 mean_ms=")), "{report}");
    }
    for i in 0..3 {
        let blocks = read_detections(&out_dir.join(format!("img{i}.det"))).unwrap();
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].detections.len() <= 200);
        assert_eq!((blocks[0].width, blocks[0].height), (640, 640));
    }

    // one unreadable image: the others are still written and the exit code is nonzero
    let bad = dir.path().join("bad.ppm");
    fs::write(&bad, b"P3\n1 1\n255\n0 0 0\n").unwrap();
    let out = run(&["detect", "--model", p(&model), "--out-dir", p(&out_dir), p(&bad), p(&images[0])]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out_dir.join("img0.det").exists());
}

#[test]
fn detect_with_resize_maps_boxes_back() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("blob.fbxw");
    save_weights(&blob_weights(), &model).unwrap();
    // a 320x320 image upsampled 2x puts the blob at (336, 336) in network coordinates
    let img = dir.path().join("small.ppm");
    ppm::write(&img, &blob_image(320, 320, &[(168.0, 168.0)])).unwrap();
    let out = run(&["detect", "--model", p(&model), "--resize", "640x640", p(&img)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let blocks = read_detections(&dir.path().join("small.det")).unwrap();
    let top = &blocks[0].detections[0];
    let expected = BBox::from_center(168.0, 168.0, 64.0, 64.0);
    assert!(jaccard(&top.bbox, &expected) > 0.9, "{top:?}");
}

#[test]
fn targets_and_augment_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.ppm");
    ppm::write(&img, &blob_image(400, 300, &[(150.0, 150.0), (300.0, 120.0)])).unwrap();
    let ann = dir.path().join("ann.txt");
    let faces = vec![blob_box(150.0, 150.0), blob_box(300.0, 120.0)];
    fs::write(
        &ann,
        format_annotations(&[AnnotatedImage {
            path: p(&img).to_string(),
            width: 400,
            height: 300,
            faces,
        }]),
    )
    .unwrap();

    let t1 = run(&["targets", "--annotations", p(&ann)]);
    let t2 = run(&["targets", "--annotations", p(&ann)]);
    assert_eq!(t1.status.code(), Some(0), "{}", String::from_utf8_lossy(&t1.stderr));
    assert_eq!(t1.stdout, t2.stdout);
    let header = stdout(&t1).lines().next().unwrap().to_string();
    assert!(header.contains("w 400 h 300"), "{header}");
    let positives: usize = header.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(positives >= 2, "{header}");

    let mut outputs = Vec::new();
    for k in 0..2 {
        let oi = dir.path().join(format!("aug{k}.ppm"));
        let oa = dir.path().join(format!("aug{k}.txt"));
        let out = run(&[
            "augment",
            "--image",
            p(&img),
            "--annotations",
            p(&ann),
            "--seed",
            "11",
            "--out-image",
            p(&oi),
            "--out-annotations",
            p(&oa),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let decoded = ppm::read(&oi).unwrap();
        assert_eq!((decoded.width, decoded.height), (1024, 1024));
        outputs.push((fs::read(&oi).unwrap(), fs::read_to_string(&oa).unwrap().replace(&format!("aug{k}"), "aug")));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bench_prints_one_summary_line() {
    let out = run(&["bench", "--size", "256x256", "--reps", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1);
    let line = text.trim_end();
    let field = |key: &str| -> f64 {
        line.split(' ')
            .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("{key} missing in {line}"))
            .parse()
            .unwrap()
    };
    assert!(field("forward_median_ms") > 0.0);
    assert!(field("pipeline_median_ms") >= field("forward_median_ms") * 0.5);
    assert!(field("forward_stddev_ms") >= 0.0);
    assert!(field("pipeline_fps") > 0.0);
}
