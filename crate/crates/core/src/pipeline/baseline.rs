//! Point classifier transferred to triangles, with and without graph-cuts refinement.

use std::fs;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cache::{KeyBuilder, StageCache};
use super::{BuildingArtifacts, RunConfig, Split};
use crate::baselines::{graph_cuts, grid_search_lambda, pool_to_triangles, GraphCutsConfig, GridSearchResult, LinearHead, LinearHeadConfig, PoolMode};
use crate::error::{Error, Result};
use crate::gnn::{argmax_labels, LabelWeights};
use crate::mesh::{load_building, Building, PartLabel};
use crate::metrics::{evaluate, MetricReport, ShapeEval, Track};
use crate::preprocess::{build_point_triangle_map, PointSet};
use crate::NUM_LABELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    /// Split used to pick λ.
    pub selection_split: Split,
    /// Split the reports describe.
    pub evaluated_split: Split,
    pub grid: GridSearchResult,
    /// Average-pooled classifier output, per-triangle argmax.
    pub pooled: MetricReport,
    /// Same probabilities refined by graph cuts at the selected λ.
    pub graph_cuts: MetricReport,
}

struct Loaded {
    id: String,
    split: Split,
    building: Building,
    points: PointSet,
    features: Vec<Vec<f64>>,
}

fn load(config: &RunConfig, a: &BuildingArtifacts) -> Result<Loaded> {
    let building = load_building(&a.building)?;
    let points = PointSet::load(&a.points)?;
    let features = config
        .backbone_for(&a.id)?
        .point_features(&building, &points)?
        .into_iter()
        .map(|f| f.to_vec())
        .collect();
    Ok(Loaded {
        id: a.id.clone(),
        split: a.split,
        building,
        points,
        features,
    })
}

fn point_labels(l: &Loaded) -> Vec<Option<PartLabel>> {
    l.points.subgroups.iter().map(|&g| l.building.labels[g]).collect()
}

fn first_present(buildings: &[BuildingArtifacts], order: [Split; 3]) -> Split {
    order
        .into_iter()
        .find(|s| buildings.iter().any(|a| a.split == *s))
        .unwrap_or(Split::Train)
}

pub(super) fn run(cache: &StageCache, config: &RunConfig, buildings: &[BuildingArtifacts]) -> Result<BaselineOutcome> {
    let head_config = LinearHeadConfig {
        seed: config.seed,
        ..Default::default()
    };
    let mut kb = KeyBuilder::new("baseline");
    for a in buildings {
        kb = kb.str(a.split.name()).key(&a.keys.preprocess).key(&a.keys.sample);
    }
    if let Some(dir) = config.backbone.strip_prefix("file:") {
        for a in buildings {
            kb = kb.file(&super::feature_path(std::path::Path::new(dir), &a.id))?;
        }
    }
    let key = kb
        .str(&config.backbone)
        .json(&(&head_config, &config.graph_cuts, &config.gc_lambdas))?
        .finish();
    let selection = first_present(buildings, [Split::Validation, Split::Train, Split::Test]);
    let evaluated = first_present(buildings, [Split::Test, Split::Validation, Split::Train]);
    let paths = cache
        .get_or_create("baseline", &key, &["json"], |tmp| {
            let loaded: Vec<Loaded> = buildings
                .iter()
                .map(|a| load(config, a).map_err(|e| Error::stage(&a.id, "baseline", e)))
                .collect::<Result<_>>()?;
            let train: Vec<&Loaded> = loaded.iter().filter(|l| l.split == Split::Train).collect();
            let feats: Vec<&[f64]> = train.iter().flat_map(|l| l.features.iter().map(Vec::as_slice)).collect();
            let labels: Vec<Option<PartLabel>> = train.iter().flat_map(|l| point_labels(l)).collect();
            let mut counts = vec![0; NUM_LABELS];
            for l in labels.iter().flatten() {
                counts[l.index()] += 1;
            }
            let weights = LabelWeights::from_counts(&counts)?;
            let head = LinearHead::fit(&feats, &labels, Some(&weights), &head_config)?;

            let mut triangle_probs: Vec<Option<Array2<f64>>> = Vec::with_capacity(loaded.len());
            for l in &loaded {
                if l.split != selection && l.split != evaluated {
                    triangle_probs.push(None);
                    continue;
                }
                let map = build_point_triangle_map(&l.building, &l.points)?;
                let p = head.predict_proba(&l.features)?;
                triangle_probs.push(Some(pool_to_triangles(&p, &map, PoolMode::Avg)?));
            }
            let pairs = |s: Split| -> Vec<(&Building, &Array2<f64>)> {
                loaded
                    .iter()
                    .zip(&triangle_probs)
                    .filter(|(l, _)| l.split == s)
                    .map(|(l, p)| (&l.building, p.as_ref().expect("probabilities computed")))
                    .collect()
            };
            let grid = grid_search_lambda(&pairs(selection), &config.gc_lambdas, &config.graph_cuts)?;
            let chosen = GraphCutsConfig {
                lambda: grid.best_lambda,
                ..config.graph_cuts
            };
            let mut pooled = Vec::new();
            let mut refined = Vec::new();
            for (l, p) in loaded.iter().zip(&triangle_probs).filter(|(l, _)| l.split == evaluated) {
                let p = p.as_ref().expect("probabilities computed");
                let argmax = argmax_labels(p).into_iter().map(Some).collect();
                pooled.push(ShapeEval::mesh(l.id.clone(), &l.building, argmax)?);
                let gc = graph_cuts(&l.building, p, &chosen)?;
                refined.push(ShapeEval::mesh(l.id.clone(), &l.building, gc.part_labels())?);
            }
            let outcome = BaselineOutcome {
                selection_split: selection,
                evaluated_split: evaluated,
                grid,
                pooled: evaluate(Track::Mesh, &pooled)?,
                graph_cuts: evaluate(Track::Mesh, &refined)?,
            };
            fs::write(&tmp[0], serde_json::to_string_pretty(&outcome)? + "\n")?;
            Ok(())
        })
        .map_err(|e| Error::stage("<baseline>", "baseline", e))?;
    Ok(serde_json::from_str(&fs::read_to_string(&paths[0])?)?)
}
