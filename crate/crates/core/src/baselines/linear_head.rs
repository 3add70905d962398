//! Softmax regression from per-point features to label probabilities.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::layers::softmax;
use crate::gnn::{Adam, AdamConfig, Grads, LabelWeights, Params};
use crate::mesh::PartLabel;
use crate::NUM_LABELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearHeadConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Training rows are subsampled to at most this many.
    pub max_samples: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for LinearHeadConfig {
    fn default() -> Self {
        LinearHeadConfig {
            iterations: 300,
            learning_rate: 0.05,
            max_samples: 20_000,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// `NUM_LABELS × (dim + 1)`, bias in the last column.
    pub weights: Vec<f64>,
}

fn design(rows: &[&[f64]], mean: &[f64], scale: &[f64]) -> Array2<f64> {
    let d = mean.len();
    Array2::from_shape_fn((rows.len(), d + 1), |(i, k)| if k == d { 1.0 } else { (rows[i][k] - mean[k]) / scale[k] })
}

impl LinearHead {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fits on rows with a label; `class_weights` defaults to uniform.
    pub fn fit<F: AsRef<[f64]>>(
        features: &[F],
        labels: &[Option<PartLabel>],
        class_weights: Option<&LabelWeights>,
        config: &LinearHeadConfig,
    ) -> Result<LinearHead> {
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!("{} feature rows for {} labels", features.len(), labels.len())));
        }
        let labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
        if labeled.is_empty() {
            return Err(Error::Empty("no labeled points to fit the linear head".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let chosen: Vec<usize> = if labeled.len() > config.max_samples {
            let mut idx: Vec<usize> = sample(&mut rng, labeled.len(), config.max_samples).into_iter().map(|k| labeled[k]).collect();
            idx.sort_unstable();
            idx
        } else {
            labeled
        };
        let rows: Vec<&[f64]> = chosen.iter().map(|&i| features[i].as_ref()).collect();
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("feature rows differ in length".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let x = design(&rows, &mean, &scale);
        let y: Vec<usize> = chosen.iter().map(|&i| labels[i].unwrap().index()).collect();
        let w: Vec<f64> = y.iter().map(|&l| class_weights.map_or(1.0, |cw| cw.0[l])).collect();
        let total_w: f64 = w.iter().sum();
        if total_w <= 0.0 {
            return Err(Error::Empty("all training points have zero class weight".into()));
        }

        let mut params = Params::default();
        params.add("head", vec![NUM_LABELS, d + 1], vec![0.0; NUM_LABELS * (d + 1)]);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: config.learning_rate,
                weight_decay: config.weight_decay,
                ..Default::default()
            },
            &params,
        );
        for _ in 0..config.iterations {
            let wm = Array2::from_shape_vec((NUM_LABELS, d + 1), params.tensors[0].data.clone()).expect("head shape");
            let mut g = softmax(&x.dot(&wm.t()));
            for (i, &l) in y.iter().enumerate() {
                g[[i, l]] -= 1.0;
                g.row_mut(i).mapv_inplace(|v| v * w[i] / total_w);
            }
            let grad = g.t().dot(&x);
            adam.step(&mut params, &Grads(vec![grad.iter().copied().collect()]));
        }
        Ok(LinearHead {
            mean,
            scale,
            weights: params.tensors.remove(0).data,
        })
    }

    pub fn predict_proba<F: AsRef<[f64]>>(&self, features: &[F]) -> Result<Array2<f64>> {
        let rows: Vec<&[f64]> = features.iter().map(AsRef::as_ref).collect();
        if let Some(r) = rows.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::ShapeMismatch(format!("feature row has {} values, head expects {}", r.len(), self.dim())));
        }
        let x = design(&rows, &self.mean, &self.scale);
        let wm = Array2::from_shape_vec((NUM_LABELS, self.dim() + 1), self.weights.clone()).expect("head shape");
        let p = softmax(&x.dot(&wm.t()));
        debug_assert!(p.sum_axis(Axis(1)).iter().all(|s| (s - 1.0).abs() < 1e-9));
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn separates_linearly_separable_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..400 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            feats.push(vec![x, y, 5.0]);
            labels.push(Some(if x + 0.5 * y > 0.0 { PartLabel::Roof } else { PartLabel::Wall }));
        }
        labels[0] = None;
        let head = LinearHead::fit(&feats, &labels, None, &LinearHeadConfig::default()).unwrap();
        let p = head.predict_proba(&feats).unwrap();
        let pred = crate::gnn::argmax_labels(&p);
        let correct = (1..400).filter(|&i| Some(pred[i]) == labels[i]).count();
        assert!(correct as f64 / 399.0 > 0.95);
        assert!(LinearHead::fit(&feats, &vec![None; 400], None, &LinearHeadConfig::default()).is_err());
    }
}
