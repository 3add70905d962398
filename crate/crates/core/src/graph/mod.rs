//! Relation graph over subgroups.
//!
//! Node features (41 values): pooled backbone descriptor (31), barycenter (3),
//! surface area (1), two opposite OBB corners (6).
//!
//! Directed edge features (11 values) for `i → j`:
//!
//! | slots | content                                                              |
//! |-------|----------------------------------------------------------------------|
//! | 0..4  | proximity: share of i's samples near j's surface at 1/2.5/5/10 %     |
//! | 4..8  | support: i resting on j (`ontop`), or else j resting on i (`below`) |
//! | 8..10 | containment: share of i's box inside j's box, box IoU                |
//! | 10    | similarity: `1 - chamfer / (0.1 · mean diagonal)`                    |
//!
//! The symmetric layout (15 values) keeps both support blocks:
//! proximity (4), ontop (4), below (4), containment (2), similarity (1).
//!
//! Absent relations contribute exact zeros. A 5-bit mask per edge records which
//! relations exist (see [`mask`]).

pub mod backbone;
pub mod features;
mod io;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use backbone::{backbone_from_spec, Backbone, FileBackbone, GeometricBackbone, ZeroBackbone, BACKBONE_DIM};
pub use io::{load_graph, read_graph, save_graph, write_graph};

use crate::error::{Error, Result};
use crate::mesh::{Building, ObbMode, PartLabel, SubgroupSummary, Vec3};
use crate::preprocess::{dedup, PointSet};
use crate::spatial::Bvh;
use features::{
    containment_features, proximity_features, similarity_feature, support_features, support_reference, Similarity,
};

pub const NODE_DIM: usize = 41;

/// Column of the subgroup surface area in a node row.
pub const AREA_FEATURE: usize = 34;

/// Relation bits of an edge mask.
pub mod mask {
    pub const PROXIMITY: u8 = 1;
    pub const ONTOP: u8 = 2;
    pub const BELOW: u8 = 4;
    pub const CONTAINMENT: u8 = 8;
    pub const SIMILARITY: u8 = 16;
}

/// Edge feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeLayout {
    /// 11 values; support carries only the block for the edge's direction.
    #[default]
    Directed,
    /// 15 values; both support blocks.
    Symmetric,
}

impl EdgeLayout {
    pub fn dim(self) -> usize {
        match self {
            EdgeLayout::Directed => 11,
            EdgeLayout::Symmetric => 15,
        }
    }
}

/// Which relation types are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTypes {
    pub proximity: bool,
    pub support: bool,
    pub similarity: bool,
    pub containment: bool,
}

impl EdgeTypes {
    pub const ALL: EdgeTypes = EdgeTypes {
        proximity: true,
        support: true,
        similarity: true,
        containment: true,
    };
    pub const NONE: EdgeTypes = EdgeTypes {
        proximity: false,
        support: false,
        similarity: false,
        containment: false,
    };

    pub fn any(&self) -> bool {
        self.proximity || self.support || self.similarity || self.containment
    }
}

impl Default for EdgeTypes {
    fn default() -> Self {
        EdgeTypes::ALL
    }
}

impl FromStr for EdgeTypes {
    type Err = Error;

    /// Comma-separated subset of `prox,support,sim,contain`; also `all` and `none`.
    fn from_str(s: &str) -> Result<Self> {
        let mut t = EdgeTypes::NONE;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "prox" | "proximity" => t.proximity = true,
                "support" => t.support = true,
                "sim" | "similarity" => t.similarity = true,
                "contain" | "containment" => t.containment = true,
                "all" => t = EdgeTypes::ALL,
                "none" => {}
                other => return Err(Error::Config(format!("unknown edge type `{other}`"))),
            }
        }
        Ok(t)
    }
}

impl fmt::Display for EdgeTypes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [
            (self.proximity, "prox"),
            (self.support, "support"),
            (self.similarity, "sim"),
            (self.containment, "contain"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| *n)
        .collect();
        if names.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", names.join(","))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub edges: EdgeTypes,
    pub layout: EdgeLayout,
    pub obb_mode: ObbMode,
    /// Skip pairs whose inflated boxes are disjoint. Produces the same edges as
    /// testing every pair.
    pub broad_phase: bool,
    /// Seed of the containment volume estimate.
    pub seed: u64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            edges: EdgeTypes::ALL,
            layout: EdgeLayout::Directed,
            obb_mode: ObbMode::Free,
            broad_phase: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
    pub mask: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    /// One row of [`NODE_DIM`] values per subgroup.
    pub nodes: Vec<Vec<f64>>,
    /// Sorted by `(src, dst)`; both directions of every connected pair are present.
    pub edges: Vec<Edge>,
    pub edge_dim: usize,
    pub labels: Vec<Option<PartLabel>>,
}

impl RelationGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Outgoing edge indices of every node.
    pub fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            out[e.src].push(k);
        }
        out
    }

    /// Neighbour lists `N(i)`.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.src].push(e.dst);
        }
        out
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&Edge> {
        self.edges
            .binary_search_by(|e| (e.src, e.dst).cmp(&(src, dst)))
            .ok()
            .map(|k| &self.edges[k])
    }

    pub fn layout(&self) -> EdgeLayout {
        if self.edge_dim == EdgeLayout::Symmetric.dim() {
            EdgeLayout::Symmetric
        } else {
            EdgeLayout::Directed
        }
    }

    /// Number of directed edges whose mask has `bit`.
    pub fn count_with(&self, bit: u8) -> usize {
        self.edges.iter().filter(|e| e.mask & bit != 0).count()
    }

    /// Copy keeping only the given relation types; edges left without any relation are dropped.
    pub fn restricted(&self, types: EdgeTypes) -> RelationGraph {
        let slots = layout_slots(self.layout());
        let mut edges = Vec::new();
        for e in &self.edges {
            let mut m = e.mask;
            let mut f = e.features.clone();
            let clear = |f: &mut Vec<f64>, r: std::ops::Range<usize>| f[r].iter_mut().for_each(|v| *v = 0.0);
            if !types.proximity {
                m &= !mask::PROXIMITY;
                clear(&mut f, slots.proximity.clone());
            }
            if !types.support {
                m &= !(mask::ONTOP | mask::BELOW);
                clear(&mut f, slots.support.clone());
            }
            if !types.containment {
                m &= !mask::CONTAINMENT;
                clear(&mut f, slots.containment.clone());
            }
            if !types.similarity {
                m &= !mask::SIMILARITY;
                clear(&mut f, slots.similarity.clone());
            }
            if m != 0 {
                edges.push(Edge { features: f, mask: m, ..*e });
            }
        }
        RelationGraph {
            nodes: self.nodes.clone(),
            edges,
            edge_dim: self.edge_dim,
            labels: self.labels.clone(),
        }
    }
}

struct Slots {
    proximity: std::ops::Range<usize>,
    support: std::ops::Range<usize>,
    containment: std::ops::Range<usize>,
    similarity: std::ops::Range<usize>,
}

fn layout_slots(layout: EdgeLayout) -> Slots {
    match layout {
        EdgeLayout::Directed => Slots {
            proximity: 0..4,
            support: 4..8,
            containment: 8..10,
            similarity: 10..11,
        },
        EdgeLayout::Symmetric => Slots {
            proximity: 0..4,
            support: 4..12,
            containment: 12..14,
            similarity: 14..15,
        },
    }
}

/// Geometry of one subgroup needed by the relation tests.
pub struct NodeGeometry {
    pub summary: SubgroupSummary,
    /// Sample positions of the subgroup.
    pub samples: Vec<Vec3>,
    /// Samples relative to the vertex barycenter.
    pub centered: Vec<Vec3>,
    pub surface: Bvh,
}

impl NodeGeometry {
    pub fn collect(building: &Building, points: &PointSet, mode: ObbMode) -> Result<Vec<NodeGeometry>> {
        let summaries = building.summarize_all(mode)?;
        let groups = points.by_subgroup(building.subgroups.len());
        Ok(summaries
            .into_par_iter()
            .zip(groups.into_par_iter())
            .enumerate()
            .map(|(g, (summary, ids))| {
                let vids = building.subgroup_vertices(g);
                let vb = vids.iter().map(|&v| building.vertices[v]).sum::<Vec3>() / vids.len().max(1) as f64;
                let samples: Vec<Vec3> = ids.iter().map(|&i| points.positions[i]).collect();
                let centered = samples.iter().map(|p| p - vb).collect();
                let surface = Bvh::new(building.subgroups[g].triangles.iter().map(|&t| (building.triangle(t), t, g)));
                NodeGeometry {
                    summary,
                    samples,
                    centered,
                    surface,
                }
            })
            .collect())
    }
}

/// All relation features of the unordered pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairRelations {
    pub prox_ij: Option<[f64; 4]>,
    pub prox_ji: Option<[f64; 4]>,
    /// i resting on j.
    pub ontop_ij: Option<[f64; 4]>,
    /// j resting on i.
    pub ontop_ji: Option<[f64; 4]>,
    pub contain_ij: Option<[f64; 2]>,
    pub contain_ji: Option<[f64; 2]>,
    pub similarity: Option<f64>,
}

impl PairRelations {
    fn is_empty(&self) -> bool {
        *self == PairRelations::default()
    }
}

fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Evaluates the enabled relations for one pair. `duplicate_class` maps each
/// subgroup to its class of exact copies.
pub fn pair_relations(
    duplicate_class: &[usize],
    nodes: &[NodeGeometry],
    i: usize,
    j: usize,
    config: &GraphConfig,
    scene_diagonal: f64,
) -> PairRelations {
    let (a, b) = (&nodes[i], &nodes[j]);
    let d = 0.5 * (a.summary.diagonal() + b.summary.diagonal());
    let mut r = PairRelations::default();
    let types = config.edges;
    let near = !config.broad_phase || {
        let margin = 0.1 * d;
        a.summary.obb.inflated(margin).intersects(&b.summary.obb.inflated(margin))
    };
    if near {
        if types.proximity {
            r.prox_ij = proximity_features(&a.samples, &b.surface, d);
            r.prox_ji = proximity_features(&b.samples, &a.surface, d);
        }
        if types.support {
            let h = support_reference(&a.summary.obb, &b.summary.obb, scene_diagonal);
            r.ontop_ij = support_features(&a.summary.obb, &b.summary.obb, h);
            r.ontop_ji = support_features(&b.summary.obb, &a.summary.obb, h);
        }
        if types.containment {
            r.contain_ij = containment_features(&a.summary.obb, &b.summary.obb, pair_seed(config.seed, i, j));
            r.contain_ji = containment_features(&b.summary.obb, &a.summary.obb, pair_seed(config.seed, j, i));
        }
    }
    if types.similarity {
        r.similarity = similarity(duplicate_class, nodes, i, j, d);
    }
    r
}

fn similarity(duplicate_class: &[usize], nodes: &[NodeGeometry], i: usize, j: usize, d: f64) -> Option<f64> {
    let (a, b) = (&nodes[i].summary, &nodes[j].summary);
    let ratio = a.area / b.area;
    if !(0.5..=2.0).contains(&ratio) {
        return None;
    }
    if duplicate_class[i] == duplicate_class[j] {
        // Exact copies have zero aligned distance; their sample sets differ only by sampling noise.
        return Some(1.0);
    }
    let Similarity { feature, .. } = similarity_feature(&nodes[i].centered, &nodes[j].centered, d);
    feature
}

fn node_features(summary: &SubgroupSummary, backbone: &[f64; BACKBONE_DIM]) -> Vec<f64> {
    let mut f = Vec::with_capacity(NODE_DIM);
    f.extend_from_slice(backbone);
    f.extend_from_slice(summary.barycenter.as_slice());
    f.push(summary.area);
    let [lo, hi] = summary.obb.opposite_corners();
    f.extend_from_slice(lo.as_slice());
    f.extend_from_slice(hi.as_slice());
    f
}

fn edge_features(r: &PairRelations, forward: bool, layout: EdgeLayout) -> (Vec<f64>, u8) {
    let (prox, prox_back, ontop, below, contain, contain_back) = if forward {
        (r.prox_ij, r.prox_ji, r.ontop_ij, r.ontop_ji, r.contain_ij, r.contain_ji)
    } else {
        (r.prox_ji, r.prox_ij, r.ontop_ji, r.ontop_ij, r.contain_ji, r.contain_ij)
    };
    let mut f = vec![0.0; layout.dim()];
    let slots = layout_slots(layout);
    let mut m = 0u8;
    if prox.is_some() || prox_back.is_some() {
        m |= mask::PROXIMITY;
        if let Some(p) = prox {
            f[slots.proximity.clone()].copy_from_slice(&p);
        }
    }
    match layout {
        EdgeLayout::Directed => {
            let pick = match (ontop, below) {
                (Some(a), Some(b)) if b[3] > a[3] => Some((b, mask::BELOW)),
                (Some(a), _) => Some((a, mask::ONTOP)),
                (None, Some(b)) => Some((b, mask::BELOW)),
                (None, None) => None,
            };
            if let Some((v, bit)) = pick {
                m |= bit;
                f[4..8].copy_from_slice(&v);
            }
        }
        EdgeLayout::Symmetric => {
            if let Some(v) = ontop {
                m |= mask::ONTOP;
                f[4..8].copy_from_slice(&v);
            }
            if let Some(v) = below {
                m |= mask::BELOW;
                f[8..12].copy_from_slice(&v);
            }
        }
    }
    if contain.is_some() || contain_back.is_some() {
        m |= mask::CONTAINMENT;
        if let Some(c) = contain {
            f[slots.containment.clone()].copy_from_slice(&c);
        }
    }
    if let Some(s) = r.similarity {
        m |= mask::SIMILARITY;
        f[slots.similarity.start] = s;
    }
    (f, m)
}

/// Builds the relation graph of `building` from its samples.
pub fn build_graph(
    building: &Building,
    points: &PointSet,
    backbone: &dyn Backbone,
    config: &GraphConfig,
) -> Result<RelationGraph> {
    let n = building.subgroups.len();
    let nodes = NodeGeometry::collect(building, points, config.obb_mode)?;
    let feats = backbone.point_features(building, points)?;
    let pooled = backbone::pool_by_subgroup(&feats, points, n);
    let node_rows: Vec<Vec<f64>> = nodes.iter().zip(&pooled).map(|(g, b)| node_features(&g.summary, b)).collect();
    for (g, row) in node_rows.iter().enumerate() {
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("node {g} has a non-finite feature at slot {k}")));
        }
    }

    let scene_diagonal = building.scene_diagonal();
    let duplicate_class = if config.edges.similarity {
        let summaries: Vec<SubgroupSummary> = nodes.iter().map(|g| g.summary.clone()).collect();
        dedup::detect_duplicates(building, &summaries, &dedup::DedupConfig::default()).class_of(n)
    } else {
        (0..n).collect()
    };
    let pairs: Vec<(usize, usize)> = if config.edges.any() {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    } else {
        Vec::new()
    };
    let relations: Vec<(usize, usize, PairRelations)> = pairs
        .into_par_iter()
        .map(|(i, j)| (i, j, pair_relations(&duplicate_class, &nodes, i, j, config, scene_diagonal)))
        .filter(|(_, _, r)| !r.is_empty())
        .collect();

    let mut edges = Vec::with_capacity(2 * relations.len());
    for (i, j, r) in &relations {
        for (src, dst, forward) in [(*i, *j, true), (*j, *i, false)] {
            let (features, m) = edge_features(r, forward, config.layout);
            edges.push(Edge { src, dst, features, mask: m });
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    Ok(RelationGraph {
        nodes: node_rows,
        edges,
        edge_dim: config.layout.dim(),
        labels: building.labels.clone(),
    })
}
