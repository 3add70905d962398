//! Reference labelers: point-probability pooling and graph cuts over faces.

pub mod graphcuts;
pub mod linear_head;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binio::{count_u32, read_f32s, read_header, write_f32s, write_header, Header};
use crate::error::{Error, Result};
use crate::mesh::Building;
use crate::preprocess::{PointSet, PointTriangleMap};
use crate::spatial::KdTree;

pub use graphcuts::{
    face_adjacency, graph_cuts, grid_search_lambda, FaceGraph, GraphCutsConfig, GraphCutsResult, GridSearchResult, Method,
};
pub use linear_head::{LinearHead, LinearHeadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolMode {
    Avg,
    Max,
}

impl std::str::FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(PoolMode::Avg),
            "max" => Ok(PoolMode::Max),
            _ => Err(Error::Config(format!("unknown pooling mode `{s}` (expected avg or max)"))),
        }
    }
}

/// Tolerance on row sums of probability matrices.
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;

/// Checks that every row is a probability vector.
pub fn validate_probabilities(p: &Array2<f64>) -> Result<()> {
    for (i, row) in p.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Validation(format!("row {i} is not a probability vector (sum {sum})")));
        }
    }
    Ok(())
}

fn pool_rows(probs: &Array2<f64>, rows: &[usize], mode: PoolMode) -> Vec<f64> {
    let c = probs.ncols();
    match mode {
        PoolMode::Avg => (0..c)
            .map(|k| crate::gnn::layers::compensated_sum(rows.iter().map(|&r| probs[[r, k]])) / rows.len() as f64)
            .collect(),
        PoolMode::Max => {
            let mut m: Vec<f64> = (0..c).map(|k| rows.iter().map(|&r| probs[[r, k]]).fold(0.0, f64::max)).collect();
            let s: f64 = m.iter().sum();
            if s > 0.0 {
                m.iter_mut().for_each(|v| *v /= s);
            } else {
                m.iter_mut().for_each(|v| *v = 1.0 / c as f64);
            }
            m
        }
    }
}

fn pool_groups(probs: &Array2<f64>, groups: &[Vec<usize>], mode: PoolMode) -> Array2<f64> {
    let mut out = Array2::zeros((groups.len(), probs.ncols()));
    for (g, rows) in groups.iter().enumerate() {
        for (k, v) in pool_rows(probs, rows, mode).into_iter().enumerate() {
            out[[g, k]] = v;
        }
    }
    out
}

/// Per-triangle probabilities from the points assigned to each triangle.
pub fn pool_to_triangles(probs: &Array2<f64>, map: &PointTriangleMap, mode: PoolMode) -> Result<Array2<f64>> {
    if probs.nrows() != map.point_to_triangle.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows for {} points",
            probs.nrows(),
            map.point_to_triangle.len()
        )));
    }
    Ok(pool_groups(probs, &map.assignments, mode))
}

/// Per-subgroup probabilities from the points sampled on each subgroup. A
/// subgroup without points takes the point nearest to any of its triangles.
pub fn pool_to_subgroups(probs: &Array2<f64>, points: &PointSet, building: &Building, mode: PoolMode) -> Result<Array2<f64>> {
    if probs.nrows() != points.len() {
        return Err(Error::ShapeMismatch(format!("{} probability rows for {} points", probs.nrows(), points.len())));
    }
    if points.is_empty() {
        return Err(Error::Empty("point set is empty".into()));
    }
    let mut groups = points.by_subgroup(building.subgroups.len());
    if groups.iter().any(Vec::is_empty) {
        let tree = KdTree::new(points.positions.clone());
        for (g, rows) in groups.iter_mut().enumerate() {
            if rows.is_empty() {
                let best = building.subgroups[g]
                    .triangles
                    .iter()
                    .filter_map(|&t| tree.nearest_to_triangle(&building.triangle(t)))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                if let Some((p, _)) = best {
                    rows.push(p);
                }
            }
        }
    }
    Ok(pool_groups(probs, &groups, mode))
}

/// Expands per-subgroup rows to per-triangle rows.
pub fn subgroup_rows_to_triangles(building: &Building, rows: &Array2<f64>) -> Array2<f64> {
    let owners = building.triangle_owners();
    Array2::from_shape_fn((owners.len(), rows.ncols()), |(t, k)| rows[[owners[t], k]])
}

const MAGIC: &[u8; 4] = b"MLPQ";
const VERSION: u32 = 1;

/// Probability file: the shared 16-byte header (flags = column count), then
/// one record of f32 values per row.
pub fn write_probabilities(w: &mut impl Write, p: &Array2<f64>) -> Result<()> {
    write_header(
        w,
        MAGIC,
        Header {
            version: VERSION,
            count: count_u32(p.nrows())?,
            flags: count_u32(p.ncols())?,
        },
    )?;
    write_f32s(w, p.iter().copied())
}

pub fn read_probabilities(r: &mut impl Read) -> Result<Array2<f64>> {
    let h = read_header(r, MAGIC, VERSION)?;
    let (n, c) = (h.count as usize, h.flags as usize);
    if c == 0 || c > 1024 {
        return Err(Error::Format(format!("invalid column count {c}")));
    }
    let data = read_f32s(r, n * c)?;
    Array2::from_shape_vec((n, c), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_probabilities(path: impl AsRef<Path>, p: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_probabilities(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_probabilities(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_probabilities(&mut BufReader::new(File::open(path)?))
}
