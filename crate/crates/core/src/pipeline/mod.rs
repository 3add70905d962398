//! End-to-end runs: split manifests, run configuration and the cached stage
//! chain preprocess → sample → graph → train → predict → eval.
//!
//! Per-building stages run concurrently on a pool of `workers` threads; label
//! weights, training and metrics are computed once over the whole split.
//! Every stage reads its artifact back from the cache, so a cache hit and a
//! fresh computation feed identical bytes downstream.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! buildings/<id>/building.obj, building.labels.json, points.bin, graph.bin, predictions.json
//! model.ckpt, train_log.jsonl
//! report.<split>.txt, report.<split>.kv, report.<split>.json
//! baseline.json                      (when the baseline is enabled)
//! run_manifest.json
//! ```

pub mod baseline;
pub mod cache;
pub mod predictions;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::GraphCutsConfig;
use crate::error::{Error, Result};
use crate::gnn::train::write_log;
use crate::gnn::{load_checkpoint, save_checkpoint, train, GnnModel, LabelWeights, ModelConfig, TrainConfig};
use crate::graph::{backbone_from_spec, build_graph, load_graph, save_graph, Backbone, FileBackbone, GraphConfig, RelationGraph, NODE_DIM};
use crate::mesh::{load_building, rotate_upright, save_building, sidecar_path, Building};
use crate::metrics::{evaluate, MetricReport, ShapeEval, Track};
use crate::preprocess::{remove_interior, sample_points, InteriorConfig, PointSet};
use crate::NUM_LABELS;

pub use baseline::BaselineOutcome;
pub use cache::{default_cache_dir, CacheKey, CacheStats, KeyBuilder, StageCache, CACHE_ENV};
pub use predictions::{Predictions, SubgroupPrediction};

/// Rotated copies per training building when augmenting, the original included.
pub const AUGMENT_ROTATIONS: usize = 12;

/// Largest augmentation translation per axis, as a fraction of the scene diagonal.
pub const AUGMENT_TRANSLATION: f64 = 0.05;

/// Everything that influences a run's outputs, plus the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Seed of point sampling and model initialization.
    pub seed: u64,
    /// Keep vertex colors; false drops them before sampling.
    pub use_color: bool,
    pub remove_interior: bool,
    pub interior: InteriorConfig,
    pub sample_budget: usize,
    /// `zero`, `geom` or `file:<dir>` with one `<id>.feat` file per building.
    pub backbone: String,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: bool,
    /// Also run the point classifier + graph-cuts baseline.
    pub baseline: bool,
    pub gc_lambdas: Vec<f64>,
    pub graph_cuts: GraphCutsConfig,
    /// Thread count for per-building stages; 0 uses all cores. Does not affect outputs.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            use_color: true,
            remove_interior: true,
            interior: InteriorConfig::default(),
            sample_budget: 100_000,
            backbone: "geom".into(),
            graph: GraphConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            augment: false,
            baseline: false,
            gc_lambdas: vec![0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0],
            graph_cuts: GraphCutsConfig::default(),
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_budget == 0 {
            return Err(Error::Config("sample budget must be positive".into()));
        }
        if self.interior.viewpoints == 0 || self.interior.samples_per_triangle == 0 {
            return Err(Error::Config("interior removal needs viewpoints and samples".into()));
        }
        if !self.backbone.starts_with("file:") {
            backbone_from_spec(&self.backbone)?;
        } else if self.augment {
            return Err(Error::Config("augmentation resamples points and cannot use a file backbone".into()));
        }
        self.model_config().validate()?;
        self.graph_cuts.validate()?;
        if self.gc_lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config("graph-cuts λ candidates must be finite and non-negative".into()));
        }
        if self.baseline && self.gc_lambdas.is_empty() {
            return Err(Error::Config("the baseline needs at least one λ candidate".into()));
        }
        Ok(())
    }

    /// Model configuration with input widths matching the graph layout. With
    /// no edge types enabled, nodes message themselves (node features only).
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            node_dim: NODE_DIM,
            edge_dim: self.graph.layout.dim(),
            num_labels: NUM_LABELS,
            self_loops: self.model.self_loops || !self.graph.edges.any(),
            ..self.model.clone()
        }
    }

    /// Backbone used for building `id`.
    pub fn backbone_for(&self, id: &str) -> Result<Box<dyn Backbone>> {
        match self.backbone.strip_prefix("file:") {
            Some(dir) if !dir.is_empty() => Ok(Box::new(FileBackbone {
                path: feature_path(Path::new(dir), id),
            })),
            _ => backbone_from_spec(&self.backbone),
        }
    }

    fn preprocess_fields(&self) -> Value {
        json!({"use_color": self.use_color, "remove_interior": self.remove_interior, "interior": self.interior})
    }
}

/// Per-point feature file of building `id` in a feature directory.
pub fn feature_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.feat"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Building ids per split. Building `id` is read from `<root>/<id>.obj` and
/// its label sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    #[serde(default)]
    pub root: PathBuf,
    pub train: Vec<String>,
    #[serde(default)]
    pub validation: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

impl SplitManifest {
    /// Reads a JSON manifest; a relative root is taken relative to the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut m: SplitManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.root.is_relative() {
            m.root = path.parent().unwrap_or(Path::new(".")).join(&m.root);
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn building_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.obj"))
    }

    /// Share of buildings in train, validation and test.
    pub fn proportions(&self) -> [f64; 3] {
        let n = (self.train.len() + self.validation.len() + self.test.len()).max(1) as f64;
        Split::ALL.map(|s| self.ids(s).len() as f64 / n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Empty("no training buildings".into()));
        }
        let mut seen = HashSet::new();
        for s in Split::ALL {
            for id in self.ids(s) {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Validation(format!("building `{id}` is listed more than once")));
                }
                let p = self.building_path(id);
                if !p.is_file() {
                    return Err(Error::Validation(format!("building `{id}` not found at {}", p.display())));
                }
            }
        }
        Ok(())
    }

    /// Ids and proportions, without the machine-specific root.
    pub fn summary(&self) -> Value {
        json!({
            "train": self.train,
            "validation": self.validation,
            "test": self.test,
            "proportions": self.proportions(),
        })
    }
}

/// Writes `buildings` under `root` and a manifest assigning the first
/// `train` to training, the next `validation` to validation and the rest to test.
pub fn write_dataset(root: &Path, buildings: &[(String, Building)], train: usize, validation: usize) -> Result<SplitManifest> {
    fs::create_dir_all(root)?;
    for (id, b) in buildings {
        save_building(b, root.join(format!("{id}.obj")))?;
    }
    let ids: Vec<String> = buildings.iter().map(|(id, _)| id.clone()).collect();
    let t = train.min(ids.len());
    let v = validation.min(ids.len() - t);
    let m = SplitManifest {
        root: PathBuf::from("."),
        train: ids[..t].to_vec(),
        validation: ids[t..t + v].to_vec(),
        test: ids[t + v..].to_vec(),
    };
    m.save(root.join("manifest.json"))?;
    Ok(SplitManifest {
        root: root.to_path_buf(),
        ..m
    })
}

/// Color stripping and interior removal.
pub fn preprocess_building(building: &Building, config: &RunConfig) -> Result<Building> {
    let mut b = building.clone();
    if !config.use_color {
        b.colors = None;
    }
    if config.remove_interior {
        let (kept, idx) = remove_interior(&b, &config.interior)?;
        if idx.len() < b.subgroups.len() {
            log::info!("removed {} interior subgroups", b.subgroups.len() - idx.len());
        }
        b = kept;
    }
    Ok(b)
}

/// Building rotated by `k / AUGMENT_ROTATIONS` of a turn about its upright
/// center axis and shifted by a small random offset.
pub fn augmented_copy(building: &Building, k: usize, seed: u64) -> Building {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aabb = building.aabb();
    let center = aabb.center();
    let d = building.scene_diagonal() * AUGMENT_TRANSLATION;
    let shift = crate::mesh::Vec3::new(rng.gen_range(-d..=d), rng.gen_range(-d..=d), rng.gen_range(-d..=d));
    let angle = std::f64::consts::TAU * k as f64 / AUGMENT_ROTATIONS as f64;
    building.transformed(|p| rotate_upright(&(p - center), angle) + center + shift)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageKeys {
    pub preprocess: CacheKey,
    pub sample: CacheKey,
    pub graph: CacheKey,
    pub predict: CacheKey,
}

/// Cached artifacts of one building.
#[derive(Debug, Clone)]
pub struct BuildingArtifacts {
    pub id: String,
    pub split: Split,
    pub building: PathBuf,
    pub points: PathBuf,
    pub graph: PathBuf,
    pub predictions: PathBuf,
    pub keys: StageKeys,
}

#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub out_dir: PathBuf,
    pub buildings: Vec<BuildingArtifacts>,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Mesh-track report per non-empty, labeled split.
    pub reports: BTreeMap<Split, MetricReport>,
    pub baseline: Option<BaselineOutcome>,
    pub manifest_path: PathBuf,
    pub cache: CacheStats,
}

impl PipelineArtifacts {
    pub fn report(&self, split: Split) -> Option<&MetricReport> {
        self.reports.get(&split)
    }
}

struct Prepared {
    id: String,
    split: Split,
    preprocess: (CacheKey, PathBuf),
    sample: (CacheKey, PathBuf),
    graph: (CacheKey, PathBuf),
}

fn first(paths: Vec<PathBuf>) -> PathBuf {
    paths.into_iter().next().expect("one artifact")
}

fn prepare_building(cache: &StageCache, config: &RunConfig, manifest: &SplitManifest, id: &str, split: Split) -> Result<Prepared> {
    let src = manifest.building_path(id);
    let side = sidecar_path(&src);
    let mut kb = KeyBuilder::new("preprocess").file(&src)?;
    if side.is_file() {
        kb = kb.file(&side)?;
    }
    let pre_key = kb.json(&config.preprocess_fields())?.finish();
    let pre_path = first(
        cache
            .get_or_create("preprocess", &pre_key, &["obj", "labels.json"], |tmp| {
                let b = load_building(&src)?;
                save_building(&preprocess_building(&b, config)?, &tmp[0])
            })
            .map_err(|e| Error::stage(id, "preprocess", e))?,
    );
    let building = load_building(&pre_path).map_err(|e| Error::stage(id, "preprocess", e))?;

    let sample_key = KeyBuilder::new("sample")
        .key(&pre_key)
        .json(&(config.sample_budget, config.seed))?
        .finish();
    let sample_path = first(
        cache
            .get_or_create("sample", &sample_key, &["points"], |tmp| {
                sample_points(&building, config.sample_budget, config.seed)?.save(&tmp[0])
            })
            .map_err(|e| Error::stage(id, "sample", e))?,
    );
    let points = PointSet::load(&sample_path).map_err(|e| Error::stage(id, "sample", e))?;

    let backbone = config.backbone_for(id).map_err(|e| Error::stage(id, "graph", e))?;
    let mut kb = KeyBuilder::new("graph").key(&pre_key).key(&sample_key).str(&backbone.name());
    if let Some(dir) = config.backbone.strip_prefix("file:") {
        kb = kb.file(&feature_path(Path::new(dir), id)).map_err(|e| Error::stage(id, "graph", e))?;
    }
    let graph_key = kb.json(&config.graph)?.finish();
    let graph_path = first(
        cache
            .get_or_create("graph", &graph_key, &["graph"], |tmp| {
                save_graph(&tmp[0], &build_graph(&building, &points, backbone.as_ref(), &config.graph)?)
            })
            .map_err(|e| Error::stage(id, "graph", e))?,
    );
    Ok(Prepared {
        id: id.to_string(),
        split,
        preprocess: (pre_key, pre_path),
        sample: (sample_key, sample_path),
        graph: (graph_key, graph_path),
    })
}

fn augment_building(cache: &StageCache, config: &RunConfig, p: &Prepared, k: usize) -> Result<(CacheKey, PathBuf)> {
    let key = KeyBuilder::new("augment")
        .key(&p.preprocess.0)
        .json(&(k, config.seed, config.sample_budget, &config.backbone, &config.graph))?
        .finish();
    let seed = u64::from_str_radix(&key.0[..16], 16).expect("hex key");
    let path = first(cache.get_or_create("augment", &key, &["graph"], |tmp| {
        let b = augmented_copy(&load_building(&p.preprocess.1)?, k, seed);
        let points = sample_points(&b, config.sample_budget, seed)?;
        let backbone = config.backbone_for(&p.id)?;
        save_graph(&tmp[0], &build_graph(&b, &points, backbone.as_ref(), &config.graph)?)
    })?);
    Ok((key, path))
}

fn label_counts(graphs: &[RelationGraph]) -> Vec<usize> {
    let mut counts = vec![0; NUM_LABELS];
    for l in graphs.iter().flat_map(|g| g.labels.iter().flatten()) {
        counts[l.index()] += 1;
    }
    counts
}

fn write_report(out_dir: &Path, split: Split, report: &MetricReport) -> Result<()> {
    let stem = format!("report.{}", split.name());
    fs::write(out_dir.join(format!("{stem}.txt")), report.to_text())?;
    fs::write(out_dir.join(format!("{stem}.kv")), report.to_key_values())?;
    fs::write(out_dir.join(format!("{stem}.json")), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

fn copy_building_artifacts(out_dir: &Path, a: &BuildingArtifacts) -> Result<()> {
    let dir = out_dir.join("buildings").join(&a.id);
    fs::create_dir_all(&dir)?;
    fs::copy(&a.building, dir.join("building.obj"))?;
    fs::copy(sidecar_path(&a.building), dir.join("building.labels.json"))?;
    fs::copy(&a.points, dir.join("points.bin"))?;
    fs::copy(&a.graph, dir.join("graph.bin"))?;
    fs::copy(&a.predictions, dir.join("predictions.json"))?;
    Ok(())
}

/// Runs every stage for every building of `manifest`, reusing cached
/// artifacts from `cache_dir`, and copies the results to `out_dir`.
pub fn run_pipeline(config: &RunConfig, manifest: &SplitManifest, out_dir: &Path, cache_dir: &Path) -> Result<PipelineArtifacts> {
    manifest.validate()?;
    config.validate()?;
    let cache = StageCache::new(cache_dir)?;
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", config.workers)))?;

    let jobs: Vec<(Split, &String)> = Split::ALL
        .into_iter()
        .flat_map(|s| manifest.ids(s).iter().map(move |id| (s, id)))
        .collect();
    let prepared: Vec<Prepared> = pool.install(|| {
        jobs.par_iter()
            .map(|(s, id)| prepare_building(&cache, config, manifest, id, *s))
            .collect::<Result<_>>()
    })?;

    let augmented: Vec<(CacheKey, PathBuf)> = if config.augment {
        let tasks: Vec<(&Prepared, usize)> = prepared
            .iter()
            .filter(|p| p.split == Split::Train)
            .flat_map(|p| (1..AUGMENT_ROTATIONS).map(move |k| (p, k)))
            .collect();
        pool.install(|| {
            tasks
                .par_iter()
                .map(|(p, k)| augment_building(&cache, config, p, *k).map_err(|e| Error::stage(&p.id, "augment", e)))
                .collect::<Result<_>>()
        })?
    } else {
        Vec::new()
    };

    // Training.
    let train_stage = |e| Error::stage("<training set>", "train", e);
    let in_split = |s: Split| prepared.iter().filter(move |p| p.split == s);
    let mut kb = KeyBuilder::new("train");
    for p in in_split(Split::Train) {
        kb = kb.key(&p.graph.0);
    }
    for (k, _) in &augmented {
        kb = kb.key(k);
    }
    kb = kb.str("validation");
    for p in in_split(Split::Validation) {
        kb = kb.key(&p.graph.0);
    }
    let train_key = kb.json(&(config.model_config(), &config.train, config.seed))?.finish();
    let train_paths = cache
        .get_or_create("train", &train_key, &["ckpt", "log"], |tmp| {
            let originals: Vec<RelationGraph> = in_split(Split::Train).map(|p| load_graph(&p.graph.1)).collect::<Result<_>>()?;
            let weights = LabelWeights::from_counts(&label_counts(&originals))?;
            let mut train_graphs = originals;
            for (_, path) in &augmented {
                train_graphs.push(load_graph(path)?);
            }
            let val_graphs: Vec<RelationGraph> = in_split(Split::Validation).map(|p| load_graph(&p.graph.1)).collect::<Result<_>>()?;
            let model = GnnModel::new(config.model_config(), config.seed)?;
            let outcome = train(model, &train_graphs, &val_graphs, &weights, &config.train)?;
            if let Some(why) = &outcome.diverged {
                log::warn!("training diverged ({why}); keeping the best snapshot");
            }
            let run = json!({
                "config": config,
                "split": manifest.summary(),
                "label_weights": weights.0,
                "best_epoch": outcome.best_epoch,
                "best_val_part_iou": outcome.best_part_iou,
                "epochs_run": outcome.log.len(),
                "diverged": outcome.diverged,
            });
            save_checkpoint(&tmp[0], &outcome.model, &run)?;
            let mut w = std::io::BufWriter::new(fs::File::create(&tmp[1])?);
            write_log(&mut w, &outcome.log)?;
            std::io::Write::flush(&mut w)?;
            Ok(())
        })
        .map_err(train_stage)?;
    let checkpoint = load_checkpoint(&train_paths[0]).map_err(train_stage)?;
    let run = checkpoint.run;
    let model = checkpoint.model;

    // Prediction.
    let buildings: Vec<BuildingArtifacts> = pool.install(|| {
        prepared
            .par_iter()
            .map(|p| {
                let key = KeyBuilder::new("predict").key(&train_key).key(&p.graph.0).finish();
                let path = cache
                    .get_or_create("predict", &key, &["json"], |tmp| {
                        let b = load_building(&p.preprocess.1)?;
                        let probs = model.forward(&load_graph(&p.graph.1)?)?;
                        Predictions::from_probabilities(&p.id, &b, &probs)?.save(&tmp[0])
                    })
                    .map_err(|e| Error::stage(&p.id, "predict", e))?;
                Ok(BuildingArtifacts {
                    id: p.id.clone(),
                    split: p.split,
                    building: p.preprocess.1.clone(),
                    points: p.sample.1.clone(),
                    graph: p.graph.1.clone(),
                    predictions: first(path),
                    keys: StageKeys {
                        preprocess: p.preprocess.0.clone(),
                        sample: p.sample.0.clone(),
                        graph: p.graph.0.clone(),
                        predict: key,
                    },
                })
            })
            .collect::<Result<_>>()
    })?;

    // Evaluation.
    let mut reports = BTreeMap::new();
    for split in Split::ALL {
        let members: Vec<&BuildingArtifacts> = buildings.iter().filter(|a| a.split == split).collect();
        if members.is_empty() {
            continue;
        }
        let mut kb = KeyBuilder::new("eval").str(split.name());
        for a in &members {
            kb = kb.key(&a.keys.preprocess).key(&a.keys.predict);
        }
        let key = kb.finish();
        let paths = cache
            .get_or_create("eval", &key, &["json"], |tmp| {
                let mut shapes = Vec::new();
                for a in &members {
                    let b = load_building(&a.building).map_err(|e| Error::stage(&a.id, "eval", e))?;
                    let pred = Predictions::load(&a.predictions)?.aligned_to(&b)?;
                    shapes.push(ShapeEval::mesh_from_subgroups(a.id.clone(), &b, &pred)?);
                }
                let any_labeled = shapes.iter().any(|s| s.truth.iter().any(Option::is_some));
                let report = if any_labeled { Some(evaluate(Track::Mesh, &shapes)?) } else { None };
                fs::write(&tmp[0], serde_json::to_string_pretty(&report)? + "\n")?;
                Ok(())
            })
            .map_err(|e| Error::stage(split.name(), "eval", e))?;
        let report: Option<MetricReport> = serde_json::from_str(&fs::read_to_string(&paths[0])?)?;
        match report {
            Some(r) => {
                write_report(out_dir, split, &r)?;
                reports.insert(split, r);
            }
            None => log::warn!("{} split has no labeled subgroups; no report", split.name()),
        }
    }

    let baseline = if config.baseline {
        let outcome = baseline::run(&cache, config, &buildings)?;
        fs::write(out_dir.join("baseline.json"), serde_json::to_string_pretty(&outcome)? + "\n")?;
        Some(outcome)
    } else {
        None
    };

    for a in &buildings {
        copy_building_artifacts(out_dir, a)?;
    }
    let ckpt_out = out_dir.join("model.ckpt");
    let log_out = out_dir.join("train_log.jsonl");
    fs::copy(&train_paths[0], &ckpt_out)?;
    fs::copy(&train_paths[1], &log_out)?;
    let stage_keys: BTreeMap<&str, &StageKeys> = buildings.iter().map(|a| (a.id.as_str(), &a.keys)).collect();
    let manifest_path = out_dir.join("run_manifest.json");
    let run_manifest = json!({
        "config": config,
        "split": manifest.summary(),
        "train_key": train_key,
        "stage_keys": stage_keys,
        "training": run,
    });
    fs::write(&manifest_path, serde_json::to_string_pretty(&run_manifest)? + "\n")?;

    Ok(PipelineArtifacts {
        out_dir: out_dir.to_path_buf(),
        buildings,
        checkpoint: ckpt_out,
        train_log: log_out,
        best_epoch: run["best_epoch"].as_u64().unwrap_or(0) as usize,
        epochs_run: run["epochs_run"].as_u64().unwrap_or(0) as usize,
        reports,
        baseline,
        manifest_path,
        cache: cache.stats(),
    })
}

#[cfg(test)]
mod tests;
