//! Training loop: one graph per Adam step, model selection on validation part IoU.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::LabelWeights;
use super::model::{argmax_labels, GnnModel};
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::graph::{RelationGraph, AREA_FEATURE};
use crate::metrics::{part_iou, shape_iou, ShapeEval};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: usize,
    pub seed: u64,
    /// Stop as soon as validation part IoU reaches this value.
    pub target_part_iou: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            max_epochs: 500,
            patience: 30,
            seed: 0,
            target_part_iou: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_part_iou: f64,
    pub val_shape_iou: f64,
    pub wall_time_s: f64,
}

impl EpochRecord {
    /// The record with wall time cleared, for run-to-run comparison.
    pub fn without_time(&self) -> EpochRecord {
        EpochRecord {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation part IoU.
    pub model: GnnModel,
    pub best_epoch: usize,
    pub best_part_iou: f64,
    pub log: Vec<EpochRecord>,
    /// Set when training stopped because of a non-finite loss or activation.
    pub diverged: Option<String>,
}

/// Writes one JSON object per line.
pub fn write_log(w: &mut impl Write, log: &[EpochRecord]) -> Result<()> {
    for r in log {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Evaluation records for a set of graphs, weighting each node by its area feature.
pub fn graph_evals(model: &GnnModel, graphs: &[RelationGraph]) -> Result<Vec<ShapeEval>> {
    graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let pred = argmax_labels(&model.forward(g)?).into_iter().map(Some).collect();
            let areas = g.nodes.iter().map(|r| r[AREA_FEATURE]).collect();
            ShapeEval::new(format!("graph{i}"), pred, g.labels.clone(), areas)
        })
        .collect()
}

/// Part IoU and shape IoU of the model's predictions; zero when nothing is labeled.
pub fn evaluate_graphs(model: &GnnModel, graphs: &[RelationGraph]) -> Result<(f64, f64)> {
    let evals = graph_evals(model, graphs)?;
    if evals.iter().all(|e| e.truth.iter().all(Option::is_none)) {
        return Ok((0.0, 0.0));
    }
    Ok((part_iou(&evals)?.mean, shape_iou(&evals)?.mean))
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. })
}

/// Trains `model` on `train_graphs`, selecting the snapshot with the best
/// validation part IoU. An empty validation set falls back to the training set.
pub fn train(
    model: GnnModel,
    train_graphs: &[RelationGraph],
    val_graphs: &[RelationGraph],
    weights: &LabelWeights,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if !(config.adam.learning_rate >= 0.0 && config.adam.learning_rate.is_finite()) {
        return Err(Error::Config(format!("invalid learning rate {}", config.adam.learning_rate)));
    }
    let usable: Vec<usize> = (0..train_graphs.len())
        .filter(|&i| {
            let labeled = train_graphs[i].labels.iter().any(Option::is_some);
            if !labeled {
                log::warn!("training graph {i} has no labeled subgroups; skipped");
            }
            labeled
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty("no training graph has labeled subgroups".into()));
    }
    let val = if val_graphs.is_empty() { train_graphs } else { val_graphs };

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.adam, &model.params);
    let mut current = model;
    let (initial_iou, _) = evaluate_graphs(&current, val)?;
    let mut best = current.clone();
    let mut best_iou = initial_iou;
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let mut diverged = None;
    let mut order = usable;

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = match current.loss_and_gradients(&train_graphs[i], weights) {
                Ok(v) => v,
                Err(e) if is_divergence(&e) => {
                    diverged = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() || !grads.is_finite() {
                diverged = Some(format!("epoch {epoch}: non-finite loss {loss}"));
                break 'epochs;
            }
            total += loss;
            adam.step(&mut current.params, &grads);
            if !current.params.is_finite() {
                diverged = Some(format!("epoch {epoch}: non-finite parameters"));
                break 'epochs;
            }
        }
        let (part, shape) = match evaluate_graphs(&current, val) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / order.len() as f64,
            val_part_iou: part,
            val_shape_iou: shape,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.5} part IoU {:.4} shape IoU {:.4}",
            record.train_loss,
            part,
            shape
        );
        log.push(record);
        if part > best_iou {
            best_iou = part;
            best_epoch = epoch;
            best = current.clone();
        }
        if config.target_part_iou.is_some_and(|t| best_iou >= t) {
            break;
        }
        if epoch - best_epoch >= config.patience {
            log::info!("no improvement for {} epochs; stopping", config.patience);
            break;
        }
    }
    if let Some(reason) = &diverged {
        log::warn!("training diverged ({reason}); returning the last good snapshot");
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_part_iou: best_iou,
        log,
        diverged,
    })
}
