//! Building mesh data model and per-subgroup geometric summaries.

mod io;
mod label;
mod obb;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::geom::{triangle_area, triangle_centroid, triangle_normal, Aabb, DEGENERATE_AREA};

pub use io::{load_building, save_building, sidecar_path, Sidecar};
pub use label::{PartLabel, UNLABELED_INDEX, UNLABELED_NAME};
pub use obb::{FaceRect, FaceSide, Obb, ObbMode};

pub type Vec3 = nalgebra::Vector3<f64>;

/// The upright axis. Input meshes follow the +Y-up convention.
pub const UP: Vec3 = Vec3::new(0.0, 1.0, 0.0);

/// A named set of triangles; the atomic labeling unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup {
    pub name: String,
    pub triangles: Vec<usize>,
}

/// An indexed triangle mesh partitioned into subgroups.
///
/// Construct through [`Building::new`] so the partition invariants are checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Optional per-vertex RGB in `[0, 1]`.
    pub colors: Option<Vec<Vec3>>,
    pub subgroups: Vec<Subgroup>,
    /// Parent name for each child name of the grouping hierarchy.
    pub hierarchy: BTreeMap<String, String>,
    /// Ground-truth label per subgroup (`None` = unlabeled).
    pub labels: Vec<Option<PartLabel>>,
}

impl Building {
    pub fn new(
        vertices: Vec<Vec3>,
        triangles: Vec<[usize; 3]>,
        colors: Option<Vec<Vec3>>,
        subgroups: Vec<Subgroup>,
        hierarchy: BTreeMap<String, String>,
        labels: Vec<Option<PartLabel>>,
    ) -> Result<Self> {
        let b = Building {
            vertices,
            triangles,
            colors,
            subgroups,
            hierarchy,
            labels,
        };
        b.validate()?;
        Ok(b)
    }

    /// Convenience constructor without colors, hierarchy or labels.
    pub fn from_parts(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>, subgroups: Vec<Subgroup>) -> Result<Self> {
        let n = subgroups.len();
        Building::new(vertices, triangles, None, subgroups, BTreeMap::new(), vec![None; n])
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nv) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {nv} vertices"
                )));
            }
        }
        if let Some(p) = self.vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Validation(format!("vertex {p} has non-finite coordinates")));
        }
        if let Some(colors) = &self.colors {
            if colors.len() != nv {
                return Err(Error::Validation(format!(
                    "{} colors for {nv} vertices",
                    colors.len()
                )));
            }
        }
        if self.labels.len() != self.subgroups.len() {
            return Err(Error::Validation(format!(
                "{} labels for {} subgroups",
                self.labels.len(),
                self.subgroups.len()
            )));
        }
        let mut owner = vec![usize::MAX; self.triangles.len()];
        for (g, sg) in self.subgroups.iter().enumerate() {
            if sg.triangles.is_empty() {
                return Err(Error::Validation(format!("subgroup `{}` is empty", sg.name)));
            }
            for &t in &sg.triangles {
                if t >= self.triangles.len() {
                    return Err(Error::Validation(format!(
                        "subgroup `{}` references triangle {t} out of range",
                        sg.name
                    )));
                }
                if owner[t] != usize::MAX {
                    return Err(Error::Validation(format!(
                        "triangle {t} belongs to subgroups `{}` and `{}`",
                        self.subgroups[owner[t]].name, sg.name
                    )));
                }
                owner[t] = g;
            }
        }
        if let Some(t) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Validation(format!("triangle {t} belongs to no subgroup")));
        }
        Ok(())
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        triangle_area(&a, &b, &c)
    }

    pub fn triangle_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangle(t);
        triangle_normal(&a, &b, &c)
    }

    /// Subgroup index owning each triangle.
    pub fn triangle_owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.triangles.len()];
        for (g, sg) in self.subgroups.iter().enumerate() {
            for &t in &sg.triangles {
                owner[t] = g;
            }
        }
        owner
    }

    /// Bounding box of all vertices referenced by triangles.
    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for tri in &self.triangles {
            for &v in tri {
                b.grow(&self.vertices[v]);
            }
        }
        b
    }

    pub fn scene_diagonal(&self) -> f64 {
        self.aabb().diagonal()
    }

    /// Distinct vertex indices used by a subgroup, in ascending order.
    pub fn subgroup_vertices(&self, g: usize) -> Vec<usize> {
        let mut vs: Vec<usize> = self.subgroups[g]
            .triangles
            .iter()
            .flat_map(|&t| self.triangles[t])
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }

    pub fn subgroup_area(&self, g: usize) -> f64 {
        self.subgroups[g]
            .triangles
            .iter()
            .map(|&t| self.triangle_area(t))
            .filter(|&a| a > DEGENERATE_AREA)
            .sum()
    }

    /// Area, barycenter and oriented bounding box of one subgroup.
    pub fn summarize(&self, g: usize, mode: ObbMode) -> Result<SubgroupSummary> {
        let sg = self
            .subgroups
            .get(g)
            .ok_or_else(|| Error::Validation(format!("subgroup {g} out of range")))?;
        if sg.triangles.is_empty() {
            return Err(Error::Validation(format!("subgroup `{}` is empty", sg.name)));
        }
        let mut area = 0.0;
        let mut weighted = Vec3::zeros();
        let mut centroids = Vec::with_capacity(sg.triangles.len());
        for &t in &sg.triangles {
            let [a, b, c] = self.triangle(t);
            let at = triangle_area(&a, &b, &c);
            if at <= DEGENERATE_AREA {
                continue;
            }
            let ct = triangle_centroid(&a, &b, &c);
            area += at;
            weighted += ct * at;
            centroids.push((ct, at));
        }
        let vertex_ids = self.subgroup_vertices(g);
        let points: Vec<Vec3> = vertex_ids.iter().map(|&v| self.vertices[v]).collect();
        let degenerate = area <= 0.0;
        let (barycenter, obb) = if degenerate {
            let aabb = Aabb::from_points(points.iter());
            (aabb.center(), Obb::from_aabb(&aabb))
        } else {
            let tris: Vec<[Vec3; 3]> = sg.triangles.iter().map(|&t| self.triangle(t)).collect();
            (weighted / area, Obb::fit(&points, &centroids, &tris, mode))
        };
        Ok(SubgroupSummary {
            area,
            barycenter,
            obb,
            degenerate,
        })
    }

    /// Summaries of every subgroup.
    pub fn summarize_all(&self, mode: ObbMode) -> Result<Vec<SubgroupSummary>> {
        (0..self.subgroups.len()).map(|g| self.summarize(g, mode)).collect()
    }

    /// Copy of the building keeping only the listed subgroups (in the given order).
    ///
    /// Triangles of dropped subgroups are removed and triangle indices are
    /// compacted; vertices are left untouched.
    pub fn retain_subgroups(&self, keep: &[usize]) -> Result<Building> {
        let mut triangles = Vec::new();
        let mut subgroups = Vec::with_capacity(keep.len());
        let mut labels = Vec::with_capacity(keep.len());
        for &g in keep {
            let sg = &self.subgroups[g];
            let start = triangles.len();
            triangles.extend(sg.triangles.iter().map(|&t| self.triangles[t]));
            subgroups.push(Subgroup {
                name: sg.name.clone(),
                triangles: (start..triangles.len()).collect(),
            });
            labels.push(self.labels[g]);
        }
        Building::new(
            self.vertices.clone(),
            triangles,
            self.colors.clone(),
            subgroups,
            self.hierarchy.clone(),
            labels,
        )
    }

    /// Applies `f` to every vertex position.
    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Building {
        let mut b = self.clone();
        for v in &mut b.vertices {
            *v = f(v);
        }
        b
    }

    /// Per-triangle ground-truth labels expanded from the subgroup labels.
    pub fn triangle_labels(&self) -> Vec<Option<PartLabel>> {
        let mut out = vec![None; self.triangles.len()];
        for (g, sg) in self.subgroups.iter().enumerate() {
            for &t in &sg.triangles {
                out[t] = self.labels[g];
            }
        }
        out
    }
}

/// Rotation about the upright axis by `angle` radians (right-handed).
pub fn rotate_upright(p: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
}

/// Cached geometry of one subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSummary {
    /// Sum of non-degenerate triangle areas.
    pub area: f64,
    /// Area-weighted mean of triangle centroids.
    pub barycenter: Vec3,
    pub obb: Obb,
    /// All triangles had zero area; the OBB is the axis-aligned box of the vertices.
    pub degenerate: bool,
}

impl SubgroupSummary {
    pub fn diagonal(&self) -> f64 {
        self.obb.diagonal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes::{cube_mesh, quad_mesh};

    fn single(verts: Vec<Vec3>, tris: Vec<[usize; 3]>) -> Building {
        let n = tris.len();
        Building::from_parts(
            verts,
            tris,
            vec![Subgroup {
                name: "g".into(),
                triangles: (0..n).collect(),
            }],
        )
        .unwrap()
    }

    #[test]
    fn unit_cube_summary() {
        let (v, t) = cube_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let b = single(v, t);
        let s = b.summarize(0, ObbMode::Free).unwrap();
        assert!((s.area - 6.0).abs() < 1e-12);
        assert!((s.barycenter - Vec3::repeat(0.5)).norm() < 1e-12);
        assert!((s.diagonal() - 3f64.sqrt()).abs() < 1e-9);
        assert!(!s.degenerate);
    }

    #[test]
    fn rotated_cube_summary() {
        let (v, t) = cube_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let b = single(v, t).transformed(|p| rotate_upright(p, 30f64.to_radians()));
        let s = b.summarize(0, ObbMode::Free).unwrap();
        assert!((s.area - 6.0).abs() < 1e-9);
        assert!((s.diagonal() - 3f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn flat_square_has_zero_extent() {
        let (v, t) = quad_mesh(Vec3::zeros(), Vec3::x(), Vec3::z());
        let b = single(v, t);
        let s = b.summarize(0, ObbMode::Free).unwrap();
        assert!((s.area - 1.0).abs() < 1e-12);
        let zero = s.obb.half_extents.iter().filter(|&&h| h.abs() < 1e-12).count();
        assert_eq!(zero, 1);
    }

    #[test]
    fn degenerate_subgroup_falls_back_to_aabb() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        let b = single(v, vec![[0, 1, 2]]);
        let s = b.summarize(0, ObbMode::Free).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.area, 0.0);
        assert!((s.diagonal() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let err = Building::from_parts(
            v.clone(),
            vec![[0, 1, 99]],
            vec![Subgroup { name: "a".into(), triangles: vec![0] }],
        );
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = Building::from_parts(
            v.clone(),
            vec![[0, 1, 2]],
            vec![
                Subgroup { name: "a".into(), triangles: vec![0] },
                Subgroup { name: "b".into(), triangles: vec![] },
            ],
        );
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = Building::from_parts(v, vec![[0, 1, 2], [0, 2, 1]], vec![Subgroup { name: "a".into(), triangles: vec![0] }]);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn retain_compacts_triangles() {
        let (mut v, mut t) = cube_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let (v2, t2) = cube_mesh(Vec3::repeat(3.0), Vec3::repeat(1.0));
        let off = v.len();
        v.extend(v2);
        t.extend(t2.into_iter().map(|[a, b, c]| [a + off, b + off, c + off]));
        let b = Building::from_parts(
            v,
            t,
            vec![
                Subgroup { name: "a".into(), triangles: (0..12).collect() },
                Subgroup { name: "b".into(), triangles: (12..24).collect() },
            ],
        )
        .unwrap();
        let kept = b.retain_subgroups(&[1]).unwrap();
        assert_eq!(kept.triangles.len(), 12);
        assert_eq!(kept.subgroups[0].name, "b");
        let s = kept.summarize(0, ObbMode::Free).unwrap();
        assert!((s.barycenter - Vec3::repeat(3.5)).norm() < 1e-12);
    }
}
