use super::*;
use crate::fixtures::catalog::{stacked_boxes, support_ablation_building};
use crate::graph::EdgeTypes;

fn small_config() -> RunConfig {
    let mut c = RunConfig {
        sample_budget: 400,
        backbone: "zero".into(),
        model: ModelConfig::tiny(11),
        ..Default::default()
    };
    c.train.max_epochs = 4;
    c.train.adam.learning_rate = 1e-2;
    c
}

fn dataset(dir: &Path) -> SplitManifest {
    let buildings: Vec<(String, Building)> = (0..4)
        .map(|i| {
            let b = if i % 2 == 0 { stacked_boxes(i) } else { support_ablation_building(i) };
            (format!("b{i}"), b)
        })
        .collect();
    write_dataset(&dir.join("data"), &buildings, 2, 1).unwrap()
}

#[test]
fn empty_manifest_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = SplitManifest {
        root: dir.path().into(),
        train: vec![],
        validation: vec![],
        test: vec![],
    };
    let e = run_pipeline(&small_config(), &m, &dir.path().join("out"), &dir.path().join("cache")).unwrap_err();
    assert_eq!(e.to_string(), "no training buildings");
    assert!(e.is_user_error());
}

#[test]
fn manifest_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = dataset(dir.path());
    m.validate().unwrap();
    assert_eq!(m.proportions(), [0.5, 0.25, 0.25]);
    let reloaded = SplitManifest::load(dir.path().join("data/manifest.json")).unwrap();
    assert_eq!(reloaded.train, m.train);
    reloaded.validate().unwrap();

    m.test.push(m.train[0].clone());
    assert!(m.validate().unwrap_err().to_string().contains("more than once"));
    m.test.pop();
    m.test.push("ghost".into());
    assert!(m.validate().unwrap_err().to_string().contains("ghost"));
}

#[test]
fn config_defaults_and_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    fs::write(&p, r#"{"seed": 7, "sample_budget": 1000}"#).unwrap();
    let c = RunConfig::load(&p).unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.sample_budget, 1000);
    assert_eq!(c.model, ModelConfig::default());
    c.save(&p).unwrap();
    assert_eq!(RunConfig::load(&p).unwrap(), c);
    fs::write(&p, r#"{"backbone": "pointnet"}"#).unwrap();
    assert!(RunConfig::load(&p).is_err());
    let bad = RunConfig {
        gc_lambdas: vec![-1.0],
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn augmentation_is_rigid() {
    let b = stacked_boxes(3);
    for k in 0..AUGMENT_ROTATIONS {
        let c = augmented_copy(&b, k, 9);
        for t in 0..b.triangles.len() {
            assert!((b.triangle_area(t) - c.triangle_area(t)).abs() < 1e-9);
        }
        let shift = (c.aabb().min.y - b.aabb().min.y).abs();
        assert!(shift <= AUGMENT_TRANSLATION * b.scene_diagonal() + 1e-9);
    }
}

#[test]
fn run_rerun_and_invalidation() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let cache = dir.path().join("cache");
    let cfg = small_config();
    let first = run_pipeline(&cfg, &m, &dir.path().join("out1"), &cache).unwrap();
    assert_eq!(first.cache.total_hits(), 0);
    assert!(first.checkpoint.is_file() && first.train_log.is_file() && first.manifest_path.is_file());
    assert_eq!(first.buildings.len(), 4);
    for split in Split::ALL {
        assert!(first.report(split).is_some(), "{}", split.name());
        assert!(dir.path().join("out1").join(format!("report.{}.kv", split.name())).is_file());
    }
    for a in &first.buildings {
        let p = Predictions::load(dir.path().join("out1/buildings").join(&a.id).join("predictions.json")).unwrap();
        let b = load_building(&a.building).unwrap();
        assert_eq!(p.subgroups.len(), b.subgroups.len());
        assert!(p.subgroups.iter().all(|s| (s.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }

    let second = run_pipeline(&cfg, &m, &dir.path().join("out2"), &cache).unwrap();
    assert_eq!(second.cache.total_misses(), 0);
    for f in ["model.ckpt", "report.test.txt", "report.train.kv", "run_manifest.json", "buildings/b3/predictions.json"] {
        assert_eq!(fs::read(dir.path().join("out1").join(f)).unwrap(), fs::read(dir.path().join("out2").join(f)).unwrap(), "{f}");
    }

    // Changing only the model seed keeps geometry stages cached.
    let reseeded = RunConfig {
        train: TrainConfig { seed: 5, ..cfg.train.clone() },
        ..cfg.clone()
    };
    let third = run_pipeline(&reseeded, &m, &dir.path().join("out3"), &cache).unwrap();
    for s in ["preprocess", "sample", "graph"] {
        assert_eq!(third.cache.misses.get(s), None, "{s}");
    }
    assert_eq!(third.cache.misses["train"], 1);
    assert_eq!(third.cache.misses["predict"], 4);

    // Changing the edge set rebuilds graphs but not samples.
    let mut node_only = cfg.clone();
    node_only.graph.edges = EdgeTypes::NONE;
    let fourth = run_pipeline(&node_only, &m, &dir.path().join("out4"), &cache).unwrap();
    assert_eq!(fourth.cache.misses.get("sample"), None);
    assert_eq!(fourth.cache.misses["graph"], 4);
}

#[test]
fn stage_errors_name_the_building() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    fs::write(m.building_path("b1"), "v 0 0 0\nf 1 2 3\n").unwrap();
    let e = run_pipeline(&small_config(), &m, &dir.path().join("out"), &dir.path().join("cache")).unwrap_err();
    match &e {
        Error::Stage { building, stage, .. } => assert_eq!((building.as_str(), stage.as_str()), ("b1", "preprocess")),
        other => panic!("unexpected error {other}"),
    }
    assert!(e.is_user_error());
}

#[test]
fn baseline_runs_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path());
    let cfg = RunConfig {
        baseline: true,
        backbone: "geom".into(),
        gc_lambdas: vec![0.0, 1.0],
        ..small_config()
    };
    let cache = dir.path().join("cache");
    let a = run_pipeline(&cfg, &m, &dir.path().join("out"), &cache).unwrap();
    let outcome = a.baseline.unwrap();
    assert_eq!(outcome.selection_split, Split::Validation);
    assert_eq!(outcome.evaluated_split, Split::Test);
    assert_eq!(outcome.grid.scores.len(), 2);
    let b = run_pipeline(&cfg, &m, &dir.path().join("out"), &cache).unwrap();
    assert_eq!(b.cache.total_misses(), 0);
    assert_eq!(b.baseline.unwrap(), outcome);
}
