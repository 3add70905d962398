//! Face-level labeling by minimising unary plus angle-weighted Potts energy.
//!
//! `E(y) = Σ_i −ln f_i(y_i) + λ Σ_(i,j) w_ij [y_i ≠ y_j]` with
//! `w_ij = −ln min(max(ω_ij, ε) / 90°, 1)` and `ω_ij` the angle between the
//! normals of two faces sharing an edge.

use std::collections::{HashMap, VecDeque};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Building, PartLabel};
use crate::metrics::{part_iou, ShapeEval};

/// Probabilities are clamped here before taking the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Alpha-expansion moves followed by an ICM polish.
    AlphaExpansion,
    Icm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphCutsConfig {
    pub lambda: f64,
    /// Lower clamp on the normal angle, in degrees.
    pub angle_clamp_deg: f64,
    pub method: Method,
    /// Maximum number of full label cycles (or ICM sweeps).
    pub max_cycles: usize,
}

impl Default for GraphCutsConfig {
    fn default() -> Self {
        GraphCutsConfig {
            lambda: 1.0,
            angle_clamp_deg: 1.0,
            method: Method::AlphaExpansion,
            max_cycles: 20,
        }
    }
}

impl GraphCutsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be a finite value ≥ 0, got {}", self.lambda)));
        }
        if !(self.angle_clamp_deg > 0.0 && self.angle_clamp_deg < 90.0) {
            return Err(Error::Config(format!("angle clamp must lie in (0, 90), got {}", self.angle_clamp_deg)));
        }
        Ok(())
    }
}

/// Undirected face adjacency with unscaled pairwise weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGraph {
    pub num_faces: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

impl FaceGraph {
    fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.num_faces];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        adj
    }
}

/// Pairwise weight of two unit normals; a zero normal counts as 90°.
pub fn angle_weight(n1: &crate::mesh::Vec3, n2: &crate::mesh::Vec3, clamp_deg: f64) -> f64 {
    let omega = if n1.norm_squared() == 0.0 || n2.norm_squared() == 0.0 {
        90.0
    } else {
        n1.dot(n2).clamp(-1.0, 1.0).acos().to_degrees()
    };
    -(omega.max(clamp_deg) / 90.0).min(1.0).ln()
}

/// Faces sharing an edge. Vertices at identical positions are merged first so
/// that separately indexed subgroups still connect.
pub fn face_adjacency(building: &Building, clamp_deg: f64) -> FaceGraph {
    let mut canon: HashMap<[u64; 3], usize> = HashMap::new();
    let ids: Vec<usize> = building
        .vertices
        .iter()
        .map(|v| {
            let key = [v.x, v.y, v.z].map(|c| (c + 0.0).to_bits());
            let next = canon.len();
            *canon.entry(key).or_insert(next)
        })
        .collect();
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in building.triangles.iter().enumerate() {
        let v = tri.map(|i| ids[i]);
        for k in 0..3 {
            let (a, b) = (v[k], v[(k + 1) % 3]);
            if a != b {
                by_edge.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
    }
    let normals: Vec<_> = (0..building.triangles.len()).map(|t| building.triangle_normal(t)).collect();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for faces in by_edge.values() {
        for x in 0..faces.len() {
            for y in x + 1..faces.len() {
                let (i, j) = (faces[x].min(faces[y]), faces[x].max(faces[y]));
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    FaceGraph {
        num_faces: building.triangles.len(),
        edges: pairs
            .into_iter()
            .map(|(i, j)| (i, j, angle_weight(&normals[i], &normals[j], clamp_deg)))
            .collect(),
    }
}

/// `−ln max(p, 1e-12)` per face and label.
pub fn unary_costs(probs: &Array2<f64>) -> Array2<f64> {
    probs.mapv(|p| -p.max(PROBABILITY_FLOOR).ln())
}

pub fn energy(unary: &Array2<f64>, graph: &FaceGraph, lambda: f64, labels: &[usize]) -> f64 {
    let mut s = crate::metrics::CompensatedSum::default();
    for (i, &l) in labels.iter().enumerate() {
        s.add(unary[[i, l]]);
    }
    for &(i, j, w) in &graph.edges {
        if labels[i] != labels[j] {
            s.add(lambda * w);
        }
    }
    s.value()
}

fn argmin_rows(unary: &Array2<f64>) -> Vec<usize> {
    unary
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v < r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphCutsResult {
    pub labels: Vec<usize>,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// Energy after initialisation and after every accepted move.
    pub energy_trace: Vec<f64>,
}

impl GraphCutsResult {
    pub fn part_labels(&self) -> Vec<Option<PartLabel>> {
        self.labels.iter().map(|&l| PartLabel::from_index(l)).collect()
    }
}

/// Dinic max-flow on a small dense-index graph.
struct FlowGraph {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const FLOW_EPS: f64 = 1e-12;

impl FlowGraph {
    fn new(n: usize) -> Self {
        FlowGraph {
            head: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) {
        if c <= 0.0 {
            return;
        }
        self.head[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.head[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0.0);
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.head.len()];
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &e in &self.head[u] {
                let v = self.to[e];
                if self.cap[e] > FLOW_EPS && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
            }
        }
        level
    }

    /// Iterative blocking-flow search from `s` to `t`.
    fn augment(&mut self, s: usize, t: usize, level: &[usize], iter: &mut [usize]) -> f64 {
        let mut total = 0.0;
        loop {
            let mut path: Vec<usize> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    break;
                }
                let mut advanced = false;
                while iter[u] < self.head[u].len() {
                    let e = self.head[u][iter[u]];
                    let v = self.to[e];
                    if self.cap[e] > FLOW_EPS && level[v] == level[u].wrapping_add(1) {
                        path.push(e);
                        u = v;
                        advanced = true;
                        break;
                    }
                    iter[u] += 1;
                }
                if !advanced {
                    if u == s {
                        return total;
                    }
                    let e = path.pop().unwrap();
                    u = self.to[e ^ 1];
                    iter[u] += 1;
                }
            }
            let f = path.iter().map(|&e| self.cap[e]).fold(f64::INFINITY, f64::min);
            for &e in &path {
                self.cap[e] -= f;
                self.cap[e ^ 1] += f;
            }
            total += f;
        }
    }

    /// Nodes reachable from `s` in the residual graph after a maximum flow.
    fn min_cut_source_side(mut self, s: usize, t: usize) -> Vec<bool> {
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return level.iter().map(|&l| l != usize::MAX).collect();
            }
            let mut iter = vec![0; self.head.len()];
            if self.augment(s, t, &level, &mut iter) <= 0.0 {
                return self.levels(s).iter().map(|&l| l != usize::MAX).collect();
            }
        }
    }
}

/// Best labeling reachable by switching any subset of faces to `alpha`.
fn expansion_move(unary: &Array2<f64>, graph: &FaceGraph, lambda: f64, labels: &[usize], alpha: usize) -> Vec<usize> {
    let n = labels.len();
    let (s, t) = (n, n + 1);
    let mut fg = FlowGraph::new(n + 2);
    // Cost of x_i = 1 (take alpha) relative to x_i = 0 (keep).
    let mut delta: Vec<f64> = (0..n).map(|i| unary[[i, alpha]] - unary[[i, labels[i]]]).collect();
    for &(i, j, w) in &graph.edges {
        let w = lambda * w;
        let pot = |a: usize, b: usize| if a != b { w } else { 0.0 };
        let e00 = pot(labels[i], labels[j]);
        let e01 = pot(labels[i], alpha);
        let e10 = pot(alpha, labels[j]);
        delta[i] += e10 - e00;
        delta[j] -= e10;
        let c = e01 + e10 - e00;
        fg.add_edge(i, j, c);
    }
    for (i, &d) in delta.iter().enumerate() {
        if d > 0.0 {
            fg.add_edge(s, i, d);
        } else if d < 0.0 {
            fg.add_edge(i, t, -d);
        }
    }
    let source_side = fg.min_cut_source_side(s, t);
    (0..n).map(|i| if source_side[i] { labels[i] } else { alpha }).collect()
}

/// Iterated conditional modes; a face changes only on a strict local improvement.
fn icm(unary: &Array2<f64>, adj: &[Vec<(usize, f64)>], lambda: f64, labels: &mut [usize], sweeps: usize) -> bool {
    let l = unary.ncols();
    let mut changed_any = false;
    for _ in 0..sweeps {
        let mut changed = false;
        for i in 0..labels.len() {
            let local = |c: usize| {
                unary[[i, c]] + adj[i].iter().filter(|(j, _)| labels[*j] != c).map(|(_, w)| lambda * w).sum::<f64>()
            };
            let cur = local(labels[i]);
            let mut best = (labels[i], cur);
            for c in 0..l {
                let v = local(c);
                if v < best.1 {
                    best = (c, v);
                }
            }
            if best.0 != labels[i] {
                labels[i] = best.0;
                changed = true;
                changed_any = true;
            }
        }
        if !changed {
            break;
        }
    }
    changed_any
}

/// Minimises the energy starting from the unary argmin. Moves are accepted
/// only if they strictly lower the energy.
pub fn solve(unary: &Array2<f64>, graph: &FaceGraph, config: &GraphCutsConfig) -> Result<GraphCutsResult> {
    config.validate()?;
    if unary.nrows() != graph.num_faces {
        return Err(Error::ShapeMismatch(format!("{} unary rows for {} faces", unary.nrows(), graph.num_faces)));
    }
    let lambda = config.lambda;
    let mut labels = argmin_rows(unary);
    let initial = energy(unary, graph, lambda, &labels);
    let mut current = initial;
    let mut trace = vec![initial];
    if lambda > 0.0 && !graph.edges.is_empty() {
        if config.method == Method::AlphaExpansion {
            for _ in 0..config.max_cycles {
                let mut improved = false;
                for alpha in 0..unary.ncols() {
                    let proposal = expansion_move(unary, graph, lambda, &labels, alpha);
                    let e = energy(unary, graph, lambda, &proposal);
                    if e < current {
                        labels = proposal;
                        current = e;
                        trace.push(e);
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
        }
        let adj = graph.neighbours();
        let mut candidate = labels.clone();
        if icm(unary, &adj, lambda, &mut candidate, config.max_cycles.max(1) * 5) {
            let e = energy(unary, graph, lambda, &candidate);
            if e < current {
                labels = candidate;
                current = e;
                trace.push(e);
            }
        }
    }
    Ok(GraphCutsResult {
        labels,
        initial_energy: initial,
        final_energy: current,
        energy_trace: trace,
    })
}

/// Per-face labels of `building` from per-face probabilities.
pub fn graph_cuts(building: &Building, probs: &Array2<f64>, config: &GraphCutsConfig) -> Result<GraphCutsResult> {
    config.validate()?;
    if probs.nrows() != building.triangles.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows for {} triangles",
            probs.nrows(),
            building.triangles.len()
        )));
    }
    let graph = face_adjacency(building, config.angle_clamp_deg);
    solve(&unary_costs(probs), &graph, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    pub best_part_iou: f64,
    /// `(λ, validation part IoU)` in ascending λ order.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the λ with the best part IoU over the validation buildings; ties go to the smaller λ.
pub fn grid_search_lambda(
    validation: &[(&Building, &Array2<f64>)],
    candidates: &[f64],
    base: &GraphCutsConfig,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::Config("no λ candidates".into()));
    }
    if validation.is_empty() {
        return Err(Error::Empty("no validation buildings for the λ search".into()));
    }
    let mut lambdas = candidates.to_vec();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let graphs: Vec<(FaceGraph, Array2<f64>)> = validation
        .par_iter()
        .map(|(b, p)| (face_adjacency(b, base.angle_clamp_deg), unary_costs(p)))
        .collect();
    let scores = lambdas
        .par_iter()
        .map(|&lambda| {
            let cfg = GraphCutsConfig { lambda, ..*base };
            let evals = validation
                .iter()
                .zip(&graphs)
                .enumerate()
                .map(|(k, ((b, _), (g, u)))| {
                    let r = solve(u, g, &cfg)?;
                    ShapeEval::mesh(format!("val{k}"), b, r.part_labels())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((lambda, part_iou(&evals)?.mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 > best.1 {
            best = s;
        }
    }
    Ok(GridSearchResult {
        best_lambda: best.0,
        best_part_iou: best.1,
        scores,
    })
}

#[cfg(test)]
#[path = "graphcuts_tests.rs"]
mod tests;
