use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use meshlabel::baselines::{
    graph_cuts, grid_search_lambda, load_probabilities, pool_to_subgroups, pool_to_triangles, save_probabilities,
    subgroup_rows_to_triangles, GraphCutsConfig, LinearHead, LinearHeadConfig, Method, PoolMode,
};
use meshlabel::fixtures::catalog::{catalog_corpus, generate, support_ablation_corpus, FixtureKind};
use meshlabel::gnn::train::write_log;
use meshlabel::gnn::{argmax_labels, load_checkpoint, save_checkpoint, train, GnnModel, LabelWeights};
use meshlabel::graph::{backbone_from_spec, build_graph, load_graph, save_graph, EdgeLayout, EdgeTypes, GraphConfig};
use meshlabel::mesh::{load_building, save_building};
use meshlabel::metrics::{evaluate, MetricReport, ShapeEval, Track};
use meshlabel::pipeline::{default_cache_dir, preprocess_building, run_pipeline, write_dataset, Predictions, RunConfig, SplitManifest};
use meshlabel::preprocess::{build_point_triangle_map, detect_duplicates, sample_points, DedupConfig, InteriorConfig, PointSet};
use meshlabel::{Building, ObbMode, PartLabel, NUM_LABELS};
use serde_json::json;

use crate::*;

/// Inconsistent command-line arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn same_length(a: &[PathBuf], b: &[PathBuf], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(usage(format!("{what}: {} and {} files given", a.len(), b.len())));
    }
    Ok(())
}

fn stem(p: &Path) -> String {
    let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn load(p: &Path) -> Result<Building> {
    load_building(p).with_context(|| format!("loading {}", p.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Sample(a) => sample(a),
        Command::Graph(a) => graph(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict(a),
        Command::Baseline(BaselineCommand::Pool(a)) => pool(a),
        Command::Baseline(BaselineCommand::Graphcuts(a)) => graphcuts(a),
        Command::Baseline(BaselineCommand::PointClassifier(a)) => point_classifier(a),
        Command::Eval(a) => eval(a),
        Command::Fixtures(a) => fixtures(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let building = load(&a.input)?;
    let config = RunConfig {
        use_color: !a.no_color,
        remove_interior: a.remove_interior,
        interior: InteriorConfig {
            viewpoints: a.viewpoints,
            samples_per_triangle: a.samples_per_triangle,
            seed: a.seed,
        },
        ..Default::default()
    };
    let out = preprocess_building(&building, &config)?;
    fs::create_dir_all(&a.output)?;
    save_building(&out, a.output.join("building.obj"))?;
    println!("{} of {} subgroups kept", out.subgroups.len(), building.subgroups.len());
    if a.dedup {
        let summaries = out.summarize_all(ObbMode::default())?;
        let sets = detect_duplicates(&out, &summaries, &DedupConfig::default());
        let name = |g: usize| out.subgroups[g].name.clone();
        let classes: Vec<Vec<String>> = sets.classes.iter().filter(|c| c.len() > 1).map(|c| c.iter().map(|&g| name(g)).collect()).collect();
        let pairs: Vec<_> = sets
            .pairs
            .iter()
            .map(|p| json!({"a": name(p.a), "b": name(p.b), "rotation_deg": p.rotation_deg, "translation": [p.translation.x, p.translation.y, p.translation.z]}))
            .collect();
        println!("{} duplicate classes", classes.len());
        write_json(&a.output.join("duplicates.json"), &json!({"classes": classes, "pairs": pairs}))?;
    }
    if let Some(n) = a.sample {
        sample_points(&out, n, a.seed)?.save(a.output.join("points.bin"))?;
    }
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let b = load(&a.input)?;
    let points = sample_points(&b, a.budget, a.seed)?;
    points.save(&a.output)?;
    println!("{} points", points.len());
    Ok(())
}

fn graph(a: GraphArgs) -> Result<()> {
    let b = load(&a.input)?;
    let points = PointSet::load(&a.points)?;
    points.validate(&b)?;
    let backbone = backbone_from_spec(&a.backbone)?;
    let config = GraphConfig {
        edges: a.edges.parse::<EdgeTypes>()?,
        layout: match a.layout {
            Layout::Directed => EdgeLayout::Directed,
            Layout::Symmetric => EdgeLayout::Symmetric,
        },
        obb_mode: match a.obb {
            Obb::Free => ObbMode::Free,
            Obb::Upright => ObbMode::Upright,
        },
        seed: a.seed,
        ..Default::default()
    };
    let g = build_graph(&b, &points, backbone.as_ref(), &config)?;
    save_graph(&a.output, &g)?;
    println!("{} nodes, {} directed edges", g.num_nodes(), g.edges.len());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = a.epochs {
        config.train.max_epochs = e;
    }
    if let Some(lr) = a.lr {
        config.train.adam.learning_rate = lr;
    }
    if let Some(p) = a.patience {
        config.train.patience = p;
    }
    if let Some(s) = a.seed {
        config.seed = s;
        config.train.seed = s;
    }
    let graphs = a.graphs.iter().map(|p| load_graph(p).with_context(|| p.display().to_string())).collect::<Result<Vec<_>>>()?;
    let val = a.val.iter().map(|p| load_graph(p).with_context(|| p.display().to_string())).collect::<Result<Vec<_>>>()?;
    let layout = graphs[0].layout();
    if graphs.iter().chain(&val).any(|g| g.layout() != layout) {
        return Err(usage("graphs mix edge layouts"));
    }
    let mut model_config = config.model_config();
    model_config.edge_dim = layout.dim();
    let mut counts = vec![0; NUM_LABELS];
    for l in graphs.iter().flat_map(|g| g.labels.iter().flatten()) {
        counts[l.index()] += 1;
    }
    let weights = LabelWeights::from_counts(&counts)?;
    let model = GnnModel::new(model_config, config.seed)?;
    let outcome = train(model, &graphs, &val, &weights, &config.train)?;
    if let Some(why) = &outcome.diverged {
        log::warn!("training diverged: {why}");
    }
    let run = json!({
        "config": config,
        "label_weights": weights.0,
        "best_epoch": outcome.best_epoch,
        "best_val_part_iou": outcome.best_part_iou,
        "epochs_run": outcome.log.len(),
        "diverged": outcome.diverged,
    });
    save_checkpoint(&a.output, &outcome.model, &run)?;
    let log_path = a.log.unwrap_or_else(|| a.output.with_extension("log.jsonl"));
    let mut w = BufWriter::new(fs::File::create(&log_path)?);
    write_log(&mut w, &outcome.log)?;
    w.flush()?;
    println!(
        "best epoch {} of {}, validation part IoU {:.4}",
        outcome.best_epoch,
        outcome.log.len(),
        outcome.best_part_iou
    );
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?.model;
    let g = load_graph(&a.graph)?;
    let b = load(&a.building)?;
    let probs = model.forward(&g)?;
    let id = a.id.unwrap_or_else(|| stem(&a.building));
    Predictions::from_probabilities(&id, &b, &probs)?.save(&a.output)?;
    if let Some(p) = &a.probs {
        save_probabilities(p, &probs)?;
    }
    if let Some(p) = &a.triangle_probs {
        save_probabilities(p, &subgroup_rows_to_triangles(&b, &probs))?;
    }
    Ok(())
}

fn pool(a: PoolArgs) -> Result<()> {
    let probs = load_probabilities(&a.probs)?;
    let points = PointSet::load(&a.points)?;
    let b = load(&a.building)?;
    points.validate(&b)?;
    let mode = match a.mode {
        Pool::Avg => PoolMode::Avg,
        Pool::Max => PoolMode::Max,
    };
    let pooled = match a.granularity {
        Granularity::Triangle => pool_to_triangles(&probs, &build_point_triangle_map(&b, &points)?, mode)?,
        Granularity::Subgroup => pool_to_subgroups(&probs, &points, &b, mode)?,
    };
    save_probabilities(&a.output, &pooled)?;
    Ok(())
}

fn graphcuts(a: GraphCutsArgs) -> Result<()> {
    same_length(&a.building, &a.probs, "--building/--probs")?;
    let mut config = GraphCutsConfig {
        lambda: a.lambda.unwrap_or(0.0),
        angle_clamp_deg: a.angle_clamp,
        method: match a.method {
            Solver::AlphaExpansion => Method::AlphaExpansion,
            Solver::Icm => Method::Icm,
        },
        max_cycles: a.max_cycles,
    };
    if let Some(grid) = &a.grid {
        same_length(&a.val_building, &a.val_probs, "--val-building/--val-probs")?;
        if a.val_building.is_empty() {
            return Err(usage("--grid needs labeled --val-building files"));
        }
        let vb = a.val_building.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
        let vp = a.val_probs.iter().map(load_probabilities).collect::<meshlabel::Result<Vec<_>>>()?;
        let pairs: Vec<_> = vb.iter().zip(&vp).collect();
        let r = grid_search_lambda(&pairs, grid, &config)?;
        for (l, s) in &r.scores {
            println!("λ = {l}: validation part IoU {s:.4}");
        }
        println!("selected λ = {}", r.best_lambda);
        config.lambda = r.best_lambda;
    }
    fs::create_dir_all(&a.output)?;
    for (bp, pp) in a.building.iter().zip(&a.probs) {
        let b = load(bp)?;
        let p = load_probabilities(pp)?;
        let r = graph_cuts(&b, &p, &config)?;
        let labels: Vec<&str> = r.part_labels().iter().map(|l| l.map_or("unlabeled", PartLabel::name)).collect();
        let id = stem(bp);
        write_json(
            &a.output.join(format!("{id}.labels.json")),
            &json!({
                "building": id,
                "lambda": config.lambda,
                "initial_energy": r.initial_energy,
                "final_energy": r.final_energy,
                "triangle_labels": labels,
            }),
        )?;
        println!("{id}: energy {:.6} -> {:.6}", r.initial_energy, r.final_energy);
    }
    Ok(())
}

fn point_classifier(a: PointClassifierArgs) -> Result<()> {
    same_length(&a.train_building, &a.train_points, "--train-building/--train-points")?;
    let backbone = backbone_from_spec(&a.backbone)?;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (bp, pp) in a.train_building.iter().zip(&a.train_points) {
        let b = load(bp)?;
        let points = PointSet::load(pp)?;
        points.validate(&b)?;
        feats.extend(backbone.point_features(&b, &points)?.into_iter().map(|f| f.to_vec()));
        labels.extend(points.subgroups.iter().map(|&g| b.labels[g]));
    }
    let mut counts = vec![0; NUM_LABELS];
    for l in labels.iter().flatten() {
        counts[l.index()] += 1;
    }
    let weights = LabelWeights::from_counts(&counts)?;
    let config = LinearHeadConfig {
        seed: a.seed,
        ..Default::default()
    };
    let head = LinearHead::fit(&feats, &labels, Some(&weights), &config)?;
    let b = load(&a.building)?;
    let points = PointSet::load(&a.points)?;
    points.validate(&b)?;
    let target: Vec<Vec<f64>> = backbone.point_features(&b, &points)?.into_iter().map(|f| f.to_vec()).collect();
    save_probabilities(&a.output, &head.predict_proba(&target)?)?;
    Ok(())
}

fn mesh_eval(pred: &Path, gt: &Path) -> Result<ShapeEval> {
    let b = load(gt)?;
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(pred).with_context(|| pred.display().to_string())?)?;
    let id = stem(gt);
    if value.get("subgroups").is_some() {
        let p: Predictions = serde_json::from_value(value)?;
        return Ok(ShapeEval::mesh_from_subgroups(id, &b, &p.aligned_to(&b)?)?);
    }
    let names: Vec<String> = match value.get("triangle_labels") {
        Some(v) => serde_json::from_value(v.clone())?,
        None => return Err(usage(format!("{} holds neither subgroup predictions nor triangle labels", pred.display()))),
    };
    let labels = names.iter().map(|n| PartLabel::parse_optional(n)).collect::<meshlabel::Result<Vec<_>>>()?;
    Ok(ShapeEval::mesh(id, &b, labels)?)
}

fn point_eval(pred: &Path, gt: &Path, points: &Path) -> Result<ShapeEval> {
    let b = load(gt)?;
    let ps = PointSet::load(points)?;
    ps.validate(&b)?;
    let probs = load_probabilities(pred)?;
    if probs.nrows() != ps.len() {
        return Err(usage(format!("{} has {} rows for {} points", pred.display(), probs.nrows(), ps.len())));
    }
    let predicted = argmax_labels(&probs).into_iter().map(Some).collect();
    let truth = ps.subgroups.iter().map(|&g| b.labels[g]).collect();
    Ok(ShapeEval::points(stem(gt), predicted, truth)?)
}

fn print_report(report: &MetricReport, output: Option<&Path>) -> Result<()> {
    print!("{}", report.to_text());
    if let Some(prefix) = output {
        fs::write(prefix.with_extension("txt"), report.to_text())?;
        fs::write(prefix.with_extension("kv"), report.to_key_values())?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    same_length(&a.pred, &a.gt, "--pred/--gt")?;
    let (track, shapes) = match a.track {
        TrackArg::Mesh => (Track::Mesh, a.pred.iter().zip(&a.gt).map(|(p, g)| mesh_eval(p, g)).collect::<Result<Vec<_>>>()?),
        TrackArg::Point => {
            same_length(&a.pred, &a.points, "--pred/--points")?;
            let shapes = a
                .pred
                .iter()
                .zip(&a.gt)
                .zip(&a.points)
                .map(|((p, g), pts)| point_eval(p, g, pts))
                .collect::<Result<Vec<_>>>()?;
            (Track::Point, shapes)
        }
    };
    print_report(&evaluate(track, &shapes)?, a.output.as_deref())
}

fn fixtures(a: FixturesArgs) -> Result<()> {
    let buildings: Vec<(String, Building)> = match a.kind.as_str() {
        "catalog" => catalog_corpus(a.count, a.seed),
        "ablation" => support_ablation_corpus(a.count, a.seed),
        k => {
            let kind: FixtureKind = k.parse()?;
            (0..a.count)
                .map(|i| (format!("{}-{i:03}", kind.name()), generate(kind, a.seed + i as u64)))
                .collect()
        }
    };
    let train = a.train.unwrap_or(buildings.len().saturating_sub(a.validation));
    let m = write_dataset(&a.output, &buildings, train, a.validation)?;
    println!(
        "{} buildings ({} train, {} validation, {} test) in {}",
        buildings.len(),
        m.train.len(),
        m.validation.len(),
        m.test.len(),
        a.output.display()
    );
    Ok(())
}

fn pipeline(a: PipelineArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
        config.train.seed = s;
        config.graph.seed = s;
        config.interior.seed = s;
    }
    if let Some(e) = a.epochs {
        config.train.max_epochs = e;
    }
    if let Some(b) = a.budget {
        config.sample_budget = b;
    }
    if let Some(e) = &a.edges {
        config.graph.edges = e.parse()?;
    }
    if let Some(b) = a.backbone {
        config.backbone = b;
    }
    if let Some(w) = a.workers {
        config.workers = w;
    }
    if a.no_color {
        config.use_color = false;
    }
    if a.baseline {
        config.baseline = true;
    }
    let manifest = SplitManifest::load(&a.manifest).with_context(|| format!("reading {}", a.manifest.display()))?;
    let cache = a.cache.unwrap_or_else(|| default_cache_dir(&a.output));
    let art = run_pipeline(&config, &manifest, &a.output, &cache)?;
    for (split, report) in &art.reports {
        println!("== {} ==", split.name());
        print!("{}", report.to_text());
    }
    if let Some(b) = &art.baseline {
        println!(
            "baseline on {} (λ = {}): pooled part IoU {:.4}, graph cuts part IoU {:.4}",
            b.evaluated_split.name(),
            b.grid.best_lambda,
            b.pooled.part.mean,
            b.graph_cuts.part.mean
        );
    }
    println!(
        "cache: {} hits, {} misses; outputs in {}",
        art.cache.total_hits(),
        art.cache.total_misses(),
        art.out_dir.display()
    );
    Ok(())
}
