//! Edge encoder, message-passing layers and decoder.

use std::borrow::Cow;

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{mean_rows, softmax, Mlp, MlpCache};
use super::loss::{weighted_nll, weighted_nll_logit_grad, LabelWeights};
use super::params::{Grads, Params};
use crate::error::{Error, Result};
use crate::graph::{Edge, RelationGraph, NODE_DIM};
use crate::mesh::PartLabel;
use crate::NUM_LABELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Width of node and edge states after every message layer.
    pub state_dim: usize,
    pub num_labels: usize,
    pub encoder_hidden: usize,
    /// Hidden widths of each message-layer MLP.
    pub message_hidden: Vec<Vec<usize>>,
    pub decoder_hidden: usize,
    pub group_norm: bool,
    /// Groups for `state_dim`-wide activations.
    pub state_groups: usize,
    /// Groups for `encoder_hidden`-wide activations.
    pub wide_groups: usize,
    pub slope: f64,
    /// Every node also receives a message along a self-edge with all-zero raw
    /// features, so node features pass through the message MLPs even without edges.
    #[serde(default)]
    pub self_loops: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            node_dim: NODE_DIM,
            edge_dim: 11,
            state_dim: 64,
            num_labels: NUM_LABELS,
            encoder_hidden: 256,
            message_hidden: vec![vec![256], vec![128; 3], vec![128; 5]],
            decoder_hidden: 64,
            group_norm: true,
            state_groups: 8,
            wide_groups: 16,
            slope: 0.2,
            self_loops: false,
        }
    }
}

impl ModelConfig {
    /// 4-wide states and small hidden layers with the same topology.
    pub fn tiny(edge_dim: usize) -> Self {
        ModelConfig {
            edge_dim,
            state_dim: 4,
            encoder_hidden: 6,
            message_hidden: vec![vec![6], vec![5; 3], vec![5; 5]],
            decoder_hidden: 4,
            state_groups: 2,
            wide_groups: 3,
            ..Default::default()
        }
    }

    fn groups_for(&self, width: usize) -> Option<usize> {
        if !self.group_norm {
            None
        } else if width == self.state_dim {
            Some(self.state_groups)
        } else if width == self.encoder_hidden {
            Some(self.wide_groups)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.message_hidden.len() < 2 {
            return Err(Error::Config("at least two message layers are required".into()));
        }
        if self.group_norm {
            for (w, g) in [(self.state_dim, self.state_groups), (self.encoder_hidden, self.wide_groups)] {
                if g == 0 || w % g != 0 {
                    return Err(Error::Config(format!("{g} groups do not divide {w} channels")));
                }
            }
        }
        if !(self.slope.is_finite()) || self.num_labels == 0 || self.state_dim == 0 {
            return Err(Error::Config("invalid model dimensions".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub config: ModelConfig,
    pub params: Params,
    pub encoder: Mlp,
    pub messages: Vec<Mlp>,
    pub decoder: Mlp,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardTrace {
    encoder: MlpCache,
    messages: Vec<MlpCache>,
    decoder: MlpCache,
    /// Node states `h^(0) … h^(L)`.
    pub node_states: Vec<Array2<f64>>,
    /// Edge states `h^(0)_ij … h^(L)_ij`, rows in graph edge order.
    pub edge_states: Vec<Array2<f64>>,
    pub probabilities: Array2<f64>,
}

impl ForwardTrace {
    /// Sign of every leaky-ReLU input of `model` in this evaluation. The loss
    /// is smooth along a parameter path on which this pattern does not change.
    pub fn activation_pattern(&self, model: &GnnModel) -> Vec<bool> {
        let mut out = Vec::new();
        self.encoder.activation_signs(&model.encoder, &mut out);
        for (cache, mlp) in self.messages.iter().zip(&model.messages) {
            cache.activation_signs(mlp, &mut out);
        }
        self.decoder.activation_signs(&model.decoder, &mut out);
        out
    }
}

impl GnnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let c = &config;
        let encoder = Mlp::build(
            &mut params,
            "encoder",
            &[c.edge_dim, c.encoder_hidden, c.node_dim],
            &[c.groups_for(c.encoder_hidden), None],
            false,
            c.slope,
            &mut rng,
        );
        let mut messages = Vec::new();
        let mut width = c.node_dim;
        for (l, hidden) in c.message_hidden.iter().enumerate() {
            let mut dims = vec![3 * width];
            dims.extend(hidden);
            dims.push(c.state_dim);
            let norms: Vec<_> = dims[1..].iter().map(|&w| c.groups_for(w)).collect();
            messages.push(Mlp::build(&mut params, &format!("message{l}"), &dims, &norms, true, c.slope, &mut rng));
            width = c.state_dim;
        }
        let decoder = Mlp::build(
            &mut params,
            "decoder",
            &[2 * c.state_dim, c.decoder_hidden, c.num_labels],
            &[None, None],
            false,
            c.slope,
            &mut rng,
        );
        Ok(GnnModel {
            config,
            params,
            encoder,
            messages,
            decoder,
        })
    }

    fn check_shapes(&self, graph: &RelationGraph) -> Result<()> {
        if graph.edge_dim != self.config.edge_dim {
            return Err(Error::ShapeMismatch(format!(
                "graph edges have {} values, model expects {}",
                graph.edge_dim, self.config.edge_dim
            )));
        }
        if let Some(row) = graph.nodes.iter().find(|r| r.len() != self.config.node_dim) {
            return Err(Error::ShapeMismatch(format!(
                "node feature row has {} values, model expects {}",
                row.len(),
                self.config.node_dim
            )));
        }
        if let Some(e) = graph.edges.iter().find(|e| e.features.len() != graph.edge_dim) {
            return Err(Error::ShapeMismatch(format!("edge ({}, {}) has {} values", e.src, e.dst, e.features.len())));
        }
        Ok(())
    }

    /// The graph messages actually flow over: `graph` plus self-edges `(i, i)`,
    /// appended after the real edges, when `self_loops` is set.
    pub fn message_graph<'a>(&self, graph: &'a RelationGraph) -> Cow<'a, RelationGraph> {
        if !self.config.self_loops {
            return Cow::Borrowed(graph);
        }
        let mut g = graph.clone();
        g.edges.extend((0..graph.num_nodes()).map(|i| Edge {
            src: i,
            dst: i,
            features: vec![0.0; graph.edge_dim],
            mask: 0,
        }));
        Cow::Owned(g)
    }

    /// Forward pass keeping every intermediate; edge rows follow [`Self::message_graph`].
    pub fn forward_trace(&self, graph: &RelationGraph) -> Result<ForwardTrace> {
        self.check_shapes(graph)?;
        let graph = self.message_graph(graph);
        let n = graph.num_nodes();
        let m = graph.edges.len();
        let nodes = Array2::from_shape_fn((n, self.config.node_dim), |(i, k)| graph.nodes[i][k]);
        let edges = Array2::from_shape_fn((m, graph.edge_dim), |(k, c)| graph.edges[k].features[c]);
        let outgoing = graph.outgoing();

        let (encoded, encoder) = self.encoder.forward(&self.params, &edges)?;
        let mut edge_states = vec![encoded];
        let mut node_states = vec![nodes];
        let mut messages = Vec::with_capacity(self.messages.len());
        for mlp in &self.messages {
            let h = node_states.last().unwrap();
            let edge_state = edge_states.last().unwrap();
            let d = h.ncols();
            let e = edge_state.ncols();
            let mut input = Array2::zeros((m, 2 * d + e));
            for (k, edge) in graph.edges.iter().enumerate() {
                input.slice_mut(s![k, ..d]).assign(&h.row(edge.src));
                input.slice_mut(s![k, d..2 * d]).assign(&h.row(edge.dst));
                input.slice_mut(s![k, 2 * d..]).assign(&edge_state.row(k));
            }
            let (out, cache) = mlp.forward(&self.params, &input)?;
            let mut next = Array2::zeros((n, out.ncols()));
            for (i, rows) in outgoing.iter().enumerate() {
                next.row_mut(i).assign(&mean_rows(&out, rows));
            }
            messages.push(cache);
            node_states.push(next);
            edge_states.push(out);
        }
        let l = node_states.len();
        let s = self.config.state_dim;
        let mut dec_in = Array2::zeros((n, 2 * s));
        dec_in.slice_mut(s![.., ..s]).assign(&node_states[l - 2]);
        dec_in.slice_mut(s![.., s..]).assign(&node_states[l - 1]);
        let (logits, decoder) = self.decoder.forward(&self.params, &dec_in)?;
        Ok(ForwardTrace {
            encoder,
            messages,
            decoder,
            node_states,
            edge_states,
            probabilities: softmax(&logits),
        })
    }

    /// Per-node label probabilities, one row per subgroup.
    pub fn forward(&self, graph: &RelationGraph) -> Result<Array2<f64>> {
        Ok(self.forward_trace(graph)?.probabilities)
    }

    pub fn predict(&self, graph: &RelationGraph) -> Result<Vec<PartLabel>> {
        Ok(argmax_labels(&self.forward(graph)?))
    }

    /// Loss of the graph's labeled nodes and its gradient for every parameter.
    pub fn loss_and_gradients(&self, graph: &RelationGraph, weights: &LabelWeights) -> Result<(f64, Grads)> {
        let labels: Vec<Option<usize>> = graph.labels.iter().map(|l| l.map(PartLabel::index)).collect();
        self.loss_and_gradients_for(graph, &labels, weights)
    }

    pub fn loss_and_gradients_for(
        &self,
        graph: &RelationGraph,
        labels: &[Option<usize>],
        weights: &LabelWeights,
    ) -> Result<(f64, Grads)> {
        let trace = self.forward_trace(graph)?;
        let loss = weighted_nll(&trace.probabilities, labels, weights);
        let dlogits = weighted_nll_logit_grad(&trace.probabilities, labels, weights);
        let grads = self.backward(graph, &trace, &dlogits);
        Ok((loss, grads))
    }

    /// Reverse pass given the gradient of the loss with respect to the logits.
    pub fn backward(&self, graph: &RelationGraph, trace: &ForwardTrace, dlogits: &Array2<f64>) -> Grads {
        let graph = self.message_graph(graph);
        let mut grads = self.params.zero_grads();
        let s = self.config.state_dim;
        let layers = self.messages.len();
        let outgoing = graph.outgoing();
        let degree: Vec<usize> = outgoing.iter().map(Vec::len).collect();

        let ddec = self.decoder.backward(&self.params, &trace.decoder, dlogits, &mut grads);
        let mut dnode: Vec<Array2<f64>> = trace.node_states.iter().map(|h| Array2::zeros(h.dim())).collect();
        dnode[layers - 1] += &ddec.slice(s![.., ..s]);
        dnode[layers] += &ddec.slice(s![.., s..]);

        let m = graph.edges.len();
        let mut dedge = Array2::<f64>::zeros((m, s));
        for l in (0..layers).rev() {
            for (k, e) in graph.edges.iter().enumerate() {
                let scale = 1.0 / degree[e.src] as f64;
                let mut row = dedge.row_mut(k);
                row.scaled_add(scale, &dnode[l + 1].row(e.src));
            }
            let dinput = self.messages[l].backward(&self.params, &trace.messages[l], &dedge, &mut grads);
            let d = trace.node_states[l].ncols();
            for (k, e) in graph.edges.iter().enumerate() {
                dnode[l].row_mut(e.src).scaled_add(1.0, &dinput.slice(s![k, ..d]));
                dnode[l].row_mut(e.dst).scaled_add(1.0, &dinput.slice(s![k, d..2 * d]));
            }
            dedge = dinput.slice(s![.., 2 * d..]).to_owned();
        }
        self.encoder.backward(&self.params, &trace.encoder, &dedge, &mut grads);
        grads
    }

    /// Copy whose parameters are rounded through `f32`.
    pub fn rounded_to_f32(&self) -> GnnModel {
        GnnModel {
            params: self.params.rounded_to_f32(),
            ..self.clone()
        }
    }
}

/// Row-wise argmax; ties go to the lowest label index.
pub fn argmax_labels(probs: &Array2<f64>) -> Vec<PartLabel> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            PartLabel::ALL[best]
        })
        .collect()
}

#[cfg(test)]
#[path = "model_tests.rs"]
mod tests;
