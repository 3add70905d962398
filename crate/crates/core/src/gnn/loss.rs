//! Weighted negative log-likelihood and label weights.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clamped here before taking the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Weight given to a label that makes up the whole training set.
pub const WEIGHT_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelWeights(pub Vec<f64>);

impl LabelWeights {
    pub fn uniform(num_labels: usize) -> Self {
        LabelWeights(vec![1.0; num_labels])
    }

    /// `ln(1 / f_l)` from label counts, floored at [`WEIGHT_FLOOR`] for present
    /// labels; labels with zero count get weight 0.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("no labeled training subgroups".into()));
        }
        Ok(LabelWeights(
            counts
                .iter()
                .map(|&c| {
                    if c == 0 {
                        0.0
                    } else {
                        (total as f64 / c as f64).ln().max(WEIGHT_FLOOR)
                    }
                })
                .collect(),
        ))
    }

    /// Same rule from frequencies in `(0, 1]`; zero frequencies get weight 0.
    pub fn from_frequencies(freqs: &[f64]) -> Result<Self> {
        if freqs.iter().all(|&f| f <= 0.0) {
            return Err(Error::Empty("no labeled training subgroups".into()));
        }
        Ok(LabelWeights(
            freqs
                .iter()
                .map(|&f| if f <= 0.0 { 0.0 } else { (1.0 / f).ln().max(WEIGHT_FLOOR) })
                .collect(),
        ))
    }

    pub fn scaled(&self, s: f64) -> Self {
        LabelWeights(self.0.iter().map(|w| w * s).collect())
    }
}

/// `-Σ w[y_i] · ln max(p[i, y_i], 1e-12)` over labeled rows.
pub fn weighted_nll(probs: &Array2<f64>, labels: &[Option<usize>], weights: &LabelWeights) -> f64 {
    labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|y| -weights.0[y] * probs[[i, y]].max(LOG_CLAMP).ln()))
        .sum()
}

/// Gradient of [`weighted_nll`] with respect to the softmax logits.
pub fn weighted_nll_logit_grad(probs: &Array2<f64>, labels: &[Option<usize>], weights: &LabelWeights) -> Array2<f64> {
    let mut g = Array2::zeros(probs.dim());
    for (i, l) in labels.iter().enumerate() {
        let Some(y) = *l else { continue };
        if probs[[i, y]] <= LOG_CLAMP {
            continue;
        }
        let w = weights.0[y];
        for k in 0..probs.ncols() {
            g[[i, k]] = w * probs[[i, k]];
        }
        g[[i, y]] -= w;
    }
    g
}
