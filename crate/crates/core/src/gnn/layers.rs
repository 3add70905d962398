//! Dense building blocks with hand-written backward passes.
//!
//! Activations are row-major `items × channels` matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{Grads, Params};
use crate::error::{Error, Result};

pub const GROUP_NORM_EPS: f64 = 1e-5;

fn weight_view(params: &Params, w: usize) -> ArrayView2<'_, f64> {
    let t = &params.tensors[w];
    ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("weight shape")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> Array2<f64> {
        let w = weight_view(params, self.weight);
        let mut y = x.dot(&w.t());
        let b = &params.tensors[self.bias].data;
        for mut row in y.rows_mut() {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, params: &Params, x: &Array2<f64>, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let w = weight_view(params, self.weight);
        let dw = dy.t().dot(x);
        for (g, v) in grads.0[self.weight].iter_mut().zip(dw.iter()) {
            *g += v;
        }
        let db = dy.sum_axis(Axis(0));
        for (g, v) in grads.0[self.bias].iter_mut().zip(db.iter()) {
            *g += v;
        }
        dy.dot(&w)
    }
}

pub fn leaky_relu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x: &Array2<f64>, dy: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= 0.0 {
            *d *= slope;
        }
    });
    dx
}

/// Group normalization over the channels of each row, with per-channel affine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupNorm {
    pub gamma: usize,
    pub beta: usize,
    pub channels: usize,
    pub groups: usize,
}

/// Normalized activations and per-(row, group) inverse standard deviations.
#[derive(Debug, Clone)]
pub struct GroupNormCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array2<f64>,
}

impl GroupNorm {
    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> (Array2<f64>, GroupNormCache) {
        let (n, c) = x.dim();
        let size = c / self.groups;
        let gamma = &params.tensors[self.gamma].data;
        let beta = &params.tensors[self.beta].data;
        let mut xhat = Array2::zeros((n, c));
        let mut inv_std = Array2::zeros((n, self.groups));
        let mut y = Array2::zeros((n, c));
        for r in 0..n {
            for g in 0..self.groups {
                let cols = g * size..(g + 1) * size;
                let mean = cols.clone().map(|k| x[[r, k]]).sum::<f64>() / size as f64;
                let var = cols.clone().map(|k| (x[[r, k]] - mean).powi(2)).sum::<f64>() / size as f64;
                let is = 1.0 / (var + GROUP_NORM_EPS).sqrt();
                inv_std[[r, g]] = is;
                for k in cols {
                    let h = (x[[r, k]] - mean) * is;
                    xhat[[r, k]] = h;
                    y[[r, k]] = gamma[k] * h + beta[k];
                }
            }
        }
        (y, GroupNormCache { xhat, inv_std })
    }

    pub fn backward(&self, params: &Params, cache: &GroupNormCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let (n, c) = dy.dim();
        let size = c / self.groups;
        let gamma = &params.tensors[self.gamma].data;
        let mut dx = Array2::zeros((n, c));
        for r in 0..n {
            for k in 0..c {
                grads.0[self.gamma][k] += dy[[r, k]] * cache.xhat[[r, k]];
                grads.0[self.beta][k] += dy[[r, k]];
            }
            for g in 0..self.groups {
                let cols = g * size..(g + 1) * size;
                let dxhat: Vec<f64> = cols.clone().map(|k| dy[[r, k]] * gamma[k]).collect();
                let sum: f64 = dxhat.iter().sum();
                let dot: f64 = cols.clone().zip(&dxhat).map(|(k, d)| d * cache.xhat[[r, k]]).sum();
                let is = cache.inv_std[[r, g]];
                let m = size as f64;
                for (k, d) in cols.zip(&dxhat) {
                    dx[[r, k]] = is / m * (m * d - sum - cache.xhat[[r, k]] * dot);
                }
            }
        }
        dx
    }
}

/// One affine layer, optionally followed by leaky ReLU and group normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub linear: Linear,
    pub activation: bool,
    pub norm: Option<GroupNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub name: String,
    pub stages: Vec<Stage>,
    pub slope: f64,
}

/// Intermediate values of one MLP evaluation.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input of every stage.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of every stage.
    pre: Vec<Array2<f64>>,
    norms: Vec<Option<GroupNormCache>>,
}

impl MlpCache {
    /// Appends whether each leaky-ReLU input of `mlp` was positive.
    pub fn activation_signs(&self, mlp: &Mlp, out: &mut Vec<bool>) {
        for (s, z) in mlp.stages.iter().zip(&self.pre) {
            if s.activation {
                out.extend(z.iter().map(|&v| v > 0.0));
            }
        }
    }
}

/// Returns the first non-finite entry as an error naming `layer`.
pub fn check_finite(layer: &str, x: &Array2<f64>) -> Result<()> {
    if let Some(((row, column), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            layer: layer.to_string(),
            row,
            column,
        });
    }
    Ok(())
}

impl Mlp {
    /// Builds an MLP with widths `dims[0] → … → dims[last]`. `norms[k]` gives the
    /// group count applied after stage `k`; `final_activation` controls whether
    /// the last stage is activated.
    pub fn build(
        params: &mut Params,
        name: &str,
        dims: &[usize],
        norms: &[Option<usize>],
        final_activation: bool,
        slope: f64,
        rng: &mut impl rand::Rng,
    ) -> Mlp {
        let count = dims.len() - 1;
        let stages = (0..count)
            .map(|k| {
                let (inp, out) = (dims[k], dims[k + 1]);
                let weight = params.add_xavier(format!("{name}.{k}.weight"), out, inp, rng);
                let bias = params.add(format!("{name}.{k}.bias"), vec![out], vec![0.0; out]);
                let norm = norms.get(k).copied().flatten().map(|groups| {
                    assert!(out % groups == 0, "{groups} groups do not divide {out} channels");
                    GroupNorm {
                        gamma: params.add(format!("{name}.{k}.gn.gamma"), vec![out], vec![1.0; out]),
                        beta: params.add(format!("{name}.{k}.gn.beta"), vec![out], vec![0.0; out]),
                        channels: out,
                        groups,
                    }
                });
                Stage {
                    linear: Linear {
                        weight,
                        bias,
                        inputs: inp,
                        outputs: out,
                    },
                    activation: k + 1 < count || final_activation,
                    norm,
                }
            })
            .collect();
        Mlp {
            name: name.to_string(),
            stages,
            slope,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.stages[0].linear.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.stages.last().unwrap().linear.outputs
    }

    pub fn forward(&self, params: &Params, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.stages.len()),
            pre: Vec::with_capacity(self.stages.len()),
            norms: Vec::with_capacity(self.stages.len()),
        };
        let mut h = x.clone();
        for (k, s) in self.stages.iter().enumerate() {
            let z = s.linear.forward(params, &h);
            check_finite(&format!("{}.{k}", self.name), &z)?;
            cache.inputs.push(h);
            let a = if s.activation { leaky_relu(&z, self.slope) } else { z.clone() };
            cache.pre.push(z);
            h = match &s.norm {
                Some(gn) => {
                    let (y, c) = gn.forward(params, &a);
                    cache.norms.push(Some(c));
                    y
                }
                None => {
                    cache.norms.push(None);
                    a
                }
            };
        }
        Ok((h, cache))
    }

    pub fn backward(&self, params: &Params, cache: &MlpCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let mut d = dy.clone();
        for (k, s) in self.stages.iter().enumerate().rev() {
            if let (Some(gn), Some(c)) = (&s.norm, &cache.norms[k]) {
                d = gn.backward(params, c, &d, grads);
            }
            if s.activation {
                d = leaky_relu_backward(&cache.pre[k], &d, self.slope);
            }
            d = s.linear.backward(params, &cache.inputs[k], &d, grads);
        }
        d
    }
}

/// Row-wise softmax.
pub fn softmax(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Column means of the selected rows with compensated summation; zero for an empty selection.
pub fn mean_rows(x: &Array2<f64>, rows: &[usize]) -> Array1<f64> {
    let c = x.ncols();
    if rows.is_empty() {
        return Array1::zeros(c);
    }
    Array1::from_shape_fn(c, |k| compensated_sum(rows.iter().map(|&r| x[[r, k]])) / rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn numeric_check(f: impl Fn(&Params) -> f64, params: &Params, grads: &Grads) {
        let eps = 1e-6;
        for (ti, t) in params.tensors.iter().enumerate() {
            for k in 0..t.len() {
                let mut p = params.clone();
                p.tensors[ti].data[k] += eps;
                let up = f(&p);
                p.tensors[ti].data[k] -= 2.0 * eps;
                let down = f(&p);
                let num = (up - down) / (2.0 * eps);
                let ana = grads.0[ti][k];
                assert!((num - ana).abs() <= 1e-5 * num.abs().max(ana.abs()).max(1.0), "{} [{k}]: {num} vs {ana}", t.name);
            }
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = Params::default();
        let mlp = Mlp::build(&mut params, "m", &[3, 8, 4], &[Some(2), Some(2)], true, 0.2, &mut rng);
        for t in &mut params.tensors {
            for v in &mut t.data {
                *v += 0.1 * rand::Rng::gen_range(&mut rng, -1.0..1.0);
            }
        }
        let x = array![[0.3, -1.2, 0.5], [1.0, 0.2, -0.7]];
        let coeff = array![[0.5, -1.0, 2.0, 0.1], [-0.3, 0.7, 0.2, 1.5]];
        let loss = |p: &Params| {
            let (y, _) = mlp.forward(p, &x).unwrap();
            (&y * &coeff).sum()
        };
        let (_, cache) = mlp.forward(&params, &x).unwrap();
        let mut grads = params.zero_grads();
        let dx = mlp.backward(&params, &cache, &coeff, &mut grads);
        numeric_check(loss, &params, &grads);
        assert_eq!(dx.dim(), (2, 3));
    }

    #[test]
    fn group_norm_rows_are_standardized() {
        let mut params = Params::default();
        let gn = GroupNorm {
            gamma: params.add("g", vec![4], vec![1.0; 4]),
            beta: params.add("b", vec![4], vec![0.0; 4]),
            channels: 4,
            groups: 2,
        };
        let (y, _) = gn.forward(&params, &array![[1.0, 3.0, -2.0, 2.0]]);
        assert!((y[[0, 0]] + y[[0, 1]]).abs() < 1e-12);
        assert!((y[[0, 1]] - 1.0 / (1.0 + GROUP_NORM_EPS).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = softmax(&array![[1000.0, 1000.0], [0.0, 1.0]]);
        assert_eq!(p[[0, 0]], 0.5);
        assert!((p.row(1).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(mean_rows(&Array2::<f64>::zeros((3, 2)), &[]), Array1::<f64>::zeros(2));
    }
}
