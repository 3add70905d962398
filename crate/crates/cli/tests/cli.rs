use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use meshlabel::gnn::ModelConfig;
use meshlabel::pipeline::RunConfig;

fn meshlabel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshlabel")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = meshlabel(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut c = RunConfig {
        sample_budget: 600,
        model: ModelConfig::tiny(11),
        gc_lambdas: vec![0.0, 1.0],
        ..Default::default()
    };
    c.train.max_epochs = 4;
    c.train.adam.learning_rate = 1e-2;
    let path = dir.join("config.json");
    c.save(&path).unwrap();
    path
}

fn metric(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in {report}"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(meshlabel(&["--help"]).status.code(), Some(0));
    assert_eq!(meshlabel(&["--version"]).status.code(), Some(0));
    assert_eq!(meshlabel(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(meshlabel(&["sample", "--input", "x.obj"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.obj");
    let out = meshlabel(&["sample", "--input", p(&missing), "--output", p(&dir.path().join("x.bin"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let bad = dir.path().join("bad.obj");
    fs::write(&bad, "v 0 0 0\nf 1 2 9\n").unwrap();
    assert_eq!(meshlabel(&["sample", "--input", p(&bad), "--output", p(&dir.path().join("x.bin"))]).status.code(), Some(1));

    let data = dir.path().join("data");
    ok(&["fixtures", "--kind", "stacked-boxes", "--output", p(&data)]);
    let b = data.join("stacked-boxes-000.obj");
    ok(&["sample", "--input", p(&b), "--output", p(&dir.path().join("pts.bin")), "--budget", "200"]);
    let out = meshlabel(&[
        "graph",
        "--input",
        p(&b),
        "--points",
        p(&dir.path().join("pts.bin")),
        "--output",
        p(&dir.path().join("g.json")),
        "--edges",
        "prox,levitation",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(meshlabel(&["fixtures", "--kind", "castle", "--output", p(&data)]).status.code(), Some(1));
}

#[test]
fn fixtures_pipeline_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let msg = ok(&["fixtures", "--kind", "catalog", "--count", "4", "--train", "2", "--validation", "1", "--output", p(&data)]);
    assert!(msg.starts_with("4 buildings (2 train, 1 validation, 1 test)"), "{msg}");
    let config = small_config(dir.path());
    let out = dir.path().join("run");
    let cache = dir.path().join("cache");
    let manifest_path = data.join("manifest.json");
    let args = [
        "pipeline",
        "--manifest",
        p(&manifest_path),
        "--config",
        p(&config),
        "--output",
        p(&out),
        "--cache",
        p(&cache),
        "--baseline",
    ];
    let first = ok(&args);
    for split in ["train", "validation", "test"] {
        assert!(first.contains(&format!("== {split} ==")), "{first}");
        assert!(out.join(format!("report.{split}.kv")).is_file());
    }
    assert!(first.contains("baseline on test"), "{first}");
    let ckpt = fs::read(out.join("model.ckpt")).unwrap();
    let second = ok(&args);
    assert!(second.contains(" 0 misses"), "{second}");
    assert_eq!(fs::read(out.join("model.ckpt")).unwrap(), ckpt);
    assert_eq!(first.lines().filter(|l| !l.starts_with("cache:")).collect::<Vec<_>>(), second.lines().filter(|l| !l.starts_with("cache:")).collect::<Vec<_>>());

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let test_id = manifest["test"][0].as_str().unwrap();
    let pred = out.join("buildings").join(test_id).join("predictions.json");
    let gt = data.join(format!("{test_id}.obj"));
    let prefix = dir.path().join("eval");
    let report = ok(&["eval", "--track", "mesh", "--pred", p(&pred), "--gt", p(&gt), "--output", p(&prefix)]);
    assert!(report.starts_with("track: mesh"));
    let part = metric(&report, "part IoU            ");
    assert!((0.0..=100.0).contains(&part));
    assert_eq!(fs::read_to_string(prefix.with_extension("txt")).unwrap(), report);
    assert!(fs::read_to_string(prefix.with_extension("kv")).unwrap().contains("part_iou="));

    let out = meshlabel(&["eval", "--track", "mesh", "--pred", p(&pred), "--gt", p(&gt), p(&gt)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stage_by_stage_and_baselines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&["fixtures", "--kind", "stacked-boxes", "--count", "2", "--seed", "3", "--output", p(&data)]);
    let mut graphs = Vec::new();
    for i in 0..2 {
        let src = data.join(format!("stacked-boxes-{i:03}.obj"));
        let pre = d.join(format!("pre{i}"));
        ok(&["preprocess", "--input", p(&src), "--output", p(&pre), "--dedup", "--remove-interior", "--sample", "500"]);
        for f in ["building.obj", "duplicates.json", "points.bin"] {
            assert!(pre.join(f).is_file(), "{f}");
        }
        let g = d.join(format!("g{i}.json"));
        let msg = ok(&[
            "graph",
            "--input",
            p(&pre.join("building.obj")),
            "--points",
            p(&pre.join("points.bin")),
            "--output",
            p(&g),
            "--backbone",
            "zero",
        ]);
        assert!(msg.contains("nodes"), "{msg}");
        graphs.push(g);
    }
    let config = small_config(d);
    let ckpt = d.join("model.ckpt");
    let msg = ok(&["train", "--graphs", p(&graphs[0]), "--val", p(&graphs[1]), "--output", p(&ckpt), "--config", p(&config), "--epochs", "3"]);
    assert!(msg.starts_with("best epoch"), "{msg}");
    assert_eq!(fs::read_to_string(d.join("model.log.jsonl")).unwrap().lines().count(), 3);

    let b = d.join("pre1/building.obj");
    let pts = d.join("pre1/points.bin");
    let pred = d.join("pred.json");
    let tri = d.join("tri.probs");
    ok(&[
        "predict",
        "--checkpoint",
        p(&ckpt),
        "--graph",
        p(&graphs[1]),
        "--building",
        p(&b),
        "--output",
        p(&pred),
        "--triangle-probs",
        p(&tri),
    ]);
    ok(&["eval", "--track", "mesh", "--pred", p(&pred), "--gt", p(&b)]);

    let gc = d.join("gc");
    let msg = ok(&["baseline", "graphcuts", "--building", p(&b), "--probs", p(&tri), "--lambda", "0.5", "--output", p(&gc)]);
    assert!(msg.contains("energy"), "{msg}");
    let labels = gc.join("building.labels.json");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&labels).unwrap()).unwrap();
    assert!(v["final_energy"].as_f64().unwrap() <= v["initial_energy"].as_f64().unwrap() + 1e-9);
    ok(&["eval", "--track", "mesh", "--pred", p(&labels), "--gt", p(&b)]);
    let msg = ok(&[
        "baseline",
        "graphcuts",
        "--building",
        p(&b),
        "--probs",
        p(&tri),
        "--grid",
        "0,1",
        "--val-building",
        p(&b),
        "--val-probs",
        p(&tri),
        "--output",
        p(&gc),
    ]);
    assert!(msg.contains("selected λ"), "{msg}");

    let point_probs = d.join("points.probs");
    ok(&[
        "baseline",
        "point-classifier",
        "--train-building",
        p(&d.join("pre0/building.obj")),
        "--train-points",
        p(&d.join("pre0/points.bin")),
        "--building",
        p(&b),
        "--points",
        p(&pts),
        "--output",
        p(&point_probs),
    ]);
    let report = ok(&["eval", "--track", "point", "--pred", p(&point_probs), "--gt", p(&b), "--points", p(&pts)]);
    assert!(report.starts_with("track: point"));
    for (granularity, mode) in [("triangle", "avg"), ("subgroup", "max")] {
        ok(&[
            "baseline",
            "pool",
            "--probs",
            p(&point_probs),
            "--points",
            p(&pts),
            "--building",
            p(&b),
            "--granularity",
            granularity,
            "--mode",
            mode,
            "--output",
            p(&d.join(format!("{granularity}.probs"))),
        ]);
    }
    // Point probabilities do not match the triangle count.
    let out = meshlabel(&["baseline", "graphcuts", "--building", p(&b), "--probs", p(&point_probs), "--lambda", "1", "--output", p(&gc)]);
    assert_eq!(out.status.code(), Some(1));
}
