//! Bidirectional point ↔ triangle assignment.

use rayon::prelude::*;

use super::sampling::PointSet;
use crate::error::{Error, Result};
use crate::mesh::Building;
use crate::spatial::{Bvh, KdTree};

#[derive(Debug, Clone, PartialEq)]
pub struct PointTriangleMap {
    /// Nearest triangle of every point.
    pub point_to_triangle: Vec<usize>,
    /// Nearest point of every triangle.
    pub triangle_to_point: Vec<usize>,
    /// Points assigned to each triangle; never empty.
    pub assignments: Vec<Vec<usize>>,
}

/// Nearest triangle per point and nearest point per triangle, ties to the lowest index.
pub fn build_point_triangle_map(building: &Building, points: &PointSet) -> Result<PointTriangleMap> {
    if points.is_empty() {
        return Err(Error::Empty("point set is empty".into()));
    }
    let bvh = Bvh::new((0..building.triangles.len()).map(|t| (building.triangle(t), t, 0)));
    let point_to_triangle: Vec<usize> = points
        .positions
        .par_iter()
        .map(|p| bvh.nearest(p).expect("building has triangles").id)
        .collect();
    let tree = KdTree::new(points.positions.clone());
    let triangle_to_point: Vec<usize> = (0..building.triangles.len())
        .into_par_iter()
        .map(|t| tree.nearest_to_triangle(&building.triangle(t)).unwrap().0)
        .collect();
    let mut assignments = vec![Vec::new(); building.triangles.len()];
    for (i, &t) in point_to_triangle.iter().enumerate() {
        assignments[t].push(i);
    }
    for (t, ps) in assignments.iter_mut().enumerate() {
        if ps.is_empty() {
            ps.push(triangle_to_point[t]);
        }
    }
    Ok(PointTriangleMap {
        point_to_triangle,
        triangle_to_point,
        assignments,
    })
}
