//! Oriented bounding boxes.
//!
//! The box frame comes from principal component analysis of the area-weighted
//! triangle centroids. PCA alone is unstable when the covariance is (nearly)
//! isotropic, e.g. for cubes, so a small set of extra candidate frames is also
//! scored: the world axes and frames spanned by the normal and edges of the
//! largest triangles. The candidate with the smallest volume wins (ties broken
//! by the smaller diagonal, then by candidate order, PCA first).

use nalgebra::{Matrix2, Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::spatial::geom::{triangle_area, triangle_normal, Aabb};

/// Number of largest triangles contributing face/edge candidate frames.
const FACE_FRAME_TRIANGLES: usize = 32;

/// Whether the box may tilt freely or keeps one axis on +Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObbMode {
    #[default]
    Free,
    Upright,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obb {
    pub center: Vec3,
    /// Orthonormal, right-handed.
    pub axes: [Vec3; 3],
    pub half_extents: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSide {
    Top,
    Bottom,
}

/// A face of an OBB as a planar rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceRect {
    pub center: Vec3,
    /// Outward unit normal of the face.
    pub normal: Vec3,
    pub axes: [Vec3; 2],
    pub half_extents: [f64; 2],
    /// Y coordinate of the face center.
    pub height: f64,
}

impl FaceRect {
    /// Point of the rectangle for parameters `(s, t)` in `[-1, 1]^2`.
    pub fn point(&self, s: f64, t: f64) -> Vec3 {
        self.center + self.axes[0] * (s * self.half_extents[0]) + self.axes[1] * (t * self.half_extents[1])
    }

    /// True if `p` (assumed on the face plane) lies inside the rectangle, with slack `tol`.
    pub fn contains_in_plane(&self, p: &Vec3, tol: f64) -> bool {
        let d = p - self.center;
        (0..2).all(|k| d.dot(&self.axes[k]).abs() <= self.half_extents[k] + tol)
    }
}

impl Obb {
    pub fn from_aabb(aabb: &Aabb) -> Obb {
        Obb {
            center: aabb.center(),
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: aabb.extent() * 0.5,
        }
    }

    /// Fits a box to `points` using the weighted `centroids` for PCA and the
    /// `triangles` for the extra face/edge frames.
    pub fn fit(points: &[Vec3], centroids: &[(Vec3, f64)], triangles: &[[Vec3; 3]], mode: ObbMode) -> Obb {
        if points.is_empty() {
            return Obb::from_aabb(&Aabb {
                min: Vec3::zeros(),
                max: Vec3::zeros(),
            });
        }
        let mut frames = Vec::new();
        match mode {
            ObbMode::Free => {
                frames.push(pca_frame(centroids));
                frames.push([Vec3::x(), Vec3::y(), Vec3::z()]);
                for tri in largest_triangles(triangles) {
                    let n = triangle_normal(&tri[0], &tri[1], &tri[2]);
                    if n == Vec3::zeros() {
                        continue;
                    }
                    for k in 0..3 {
                        let e = tri[(k + 1) % 3] - tri[k];
                        if let Some(f) = frame_from(n, e) {
                            frames.push(f);
                        }
                    }
                }
            }
            ObbMode::Upright => {
                frames.push(upright_pca_frame(centroids));
                frames.push([Vec3::x(), Vec3::y(), Vec3::z()]);
                for tri in largest_triangles(triangles) {
                    for k in 0..3 {
                        let e = tri[(k + 1) % 3] - tri[k];
                        if let Some(f) = frame_from(Vec3::y(), e) {
                            // keep the upright axis in slot 1
                            frames.push([f[1], f[0], -f[2]]);
                        }
                    }
                }
            }
        }
        let mut best: Option<(Obb, f64, f64)> = None;
        for axes in frames {
            let obb = box_in_frame(points, axes);
            let vol = obb.volume();
            let diag = obb.diagonal();
            let better = match &best {
                None => true,
                Some((_, bv, bd)) => {
                    let tol = 1e-9 * bv.max(vol);
                    vol < bv - tol || ((vol - bv).abs() <= tol && diag < bd * (1.0 - 1e-12))
                }
            };
            if better {
                best = Some((obb, vol, diag));
            }
        }
        best.unwrap().0
    }

    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents.norm()
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    /// The two opposite corners `center ∓ Σ axes·half_extents`.
    pub fn opposite_corners(&self) -> [Vec3; 2] {
        let d: Vec3 = (0..3).map(|k| self.axes[k] * self.half_extents[k]).sum();
        [self.center - d, self.center + d]
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let mut p = self.center;
            for k in 0..3 {
                let s = if (i >> k) & 1 == 1 { 1.0 } else { -1.0 };
                p += self.axes[k] * (s * self.half_extents[k]);
            }
            *c = p;
        }
        out
    }

    /// Coordinates of `p` in the box frame, relative to the center.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        let d = p - self.center;
        Vec3::new(d.dot(&self.axes[0]), d.dot(&self.axes[1]), d.dot(&self.axes[2]))
    }

    pub fn from_local(&self, q: &Vec3) -> Vec3 {
        self.center + self.axes[0] * q.x + self.axes[1] * q.y + self.axes[2] * q.z
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        let q = self.to_local(p);
        (0..3).all(|k| q[k].abs() <= self.half_extents[k] + tol)
    }

    /// Box grown by `margin` along every axis.
    pub fn inflated(&self, margin: f64) -> Obb {
        Obb {
            half_extents: self.half_extents.add_scalar(margin),
            ..*self
        }
    }

    /// Vertical extent of the box.
    pub fn height(&self) -> f64 {
        2.0 * (0..3).map(|k| self.axes[k].y.abs() * self.half_extents[k]).sum::<f64>()
    }

    pub fn aabb(&self) -> Aabb {
        let r: Vec3 = Vec3::from_fn(|i, _| (0..3).map(|k| self.axes[k][i].abs() * self.half_extents[k]).sum());
        Aabb {
            min: self.center - r,
            max: self.center + r,
        }
    }

    /// Separating-axis overlap test (touching boxes count as overlapping).
    pub fn intersects(&self, other: &Obb) -> bool {
        let mut axes: Vec<Vec3> = Vec::with_capacity(15);
        axes.extend_from_slice(&self.axes);
        axes.extend_from_slice(&other.axes);
        for a in &self.axes {
            for b in &other.axes {
                let c = a.cross(b);
                if c.norm_squared() > 1e-12 {
                    axes.push(c.normalize());
                }
            }
        }
        let d = other.center - self.center;
        let scale = self.diagonal().max(other.diagonal()).max(1.0);
        axes.iter().all(|ax| {
            let ra: f64 = (0..3).map(|k| self.half_extents[k] * self.axes[k].dot(ax).abs()).sum();
            let rb: f64 = (0..3).map(|k| other.half_extents[k] * other.axes[k].dot(ax).abs()).sum();
            d.dot(ax).abs() <= ra + rb + 1e-12 * scale
        })
    }

    /// Top or bottom face: the face whose outward normal has the largest +Y
    /// (or -Y) component; ties go to the lower axis index.
    pub fn face_rect(&self, side: FaceSide) -> FaceRect {
        let mut k = 0;
        for j in 1..3 {
            if self.axes[j].y.abs() > self.axes[k].y.abs() {
                k = j;
            }
        }
        let up_sign = if self.axes[k].y >= 0.0 { 1.0 } else { -1.0 };
        let sign = match side {
            FaceSide::Top => up_sign,
            FaceSide::Bottom => -up_sign,
        };
        let normal = self.axes[k] * sign;
        let center = self.center + normal * self.half_extents[k];
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        FaceRect {
            center,
            normal,
            axes: [self.axes[i], self.axes[j]],
            half_extents: [self.half_extents[i], self.half_extents[j]],
            height: center.y,
        }
    }
}

fn largest_triangles(triangles: &[[Vec3; 3]]) -> Vec<[Vec3; 3]> {
    let mut idx: Vec<(usize, f64)> = triangles
        .iter()
        .enumerate()
        .map(|(i, t)| (i, triangle_area(&t[0], &t[1], &t[2])))
        .filter(|&(_, a)| a > 0.0)
        .collect();
    idx.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    idx.truncate(FACE_FRAME_TRIANGLES);
    idx.into_iter().map(|(i, _)| triangles[i]).collect()
}

/// Right-handed frame `(n, e', n × e')` with `e'` the part of `e` orthogonal to `n`.
fn frame_from(n: Vec3, e: Vec3) -> Option<[Vec3; 3]> {
    let e = e - n * n.dot(&e);
    let len = e.norm();
    if len < 1e-12 {
        return None;
    }
    let e = e / len;
    Some([n, e, n.cross(&e)])
}

fn box_in_frame(points: &[Vec3], axes: [Vec3; 3]) -> Obb {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        let q = Vec3::new(p.dot(&axes[0]), p.dot(&axes[1]), p.dot(&axes[2]));
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let mid = (lo + hi) * 0.5;
    Obb {
        center: axes[0] * mid.x + axes[1] * mid.y + axes[2] * mid.z,
        axes,
        half_extents: (hi - lo) * 0.5,
    }
}

fn canonical_sign(v: Vec3) -> Vec3 {
    let mut k = 0;
    for j in 1..3 {
        if v[j].abs() > v[k].abs() + 1e-12 {
            k = j;
        }
    }
    if v[k] < 0.0 {
        -v
    } else {
        v
    }
}

fn pca_frame(centroids: &[(Vec3, f64)]) -> [Vec3; 3] {
    let total: f64 = centroids.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return [Vec3::x(), Vec3::y(), Vec3::z()];
    }
    let mean: Vec3 = centroids.iter().map(|(c, a)| c * *a).sum::<Vec3>() / total;
    let mut cov = Matrix3::zeros();
    for (c, a) in centroids {
        let d = c - mean;
        cov += d * d.transpose() * *a;
    }
    cov /= total;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let a0 = canonical_sign(eig.eigenvectors.column(order[0]).into_owned().normalize());
    let a1 = eig.eigenvectors.column(order[1]).into_owned();
    let a1 = canonical_sign((a1 - a0 * a0.dot(&a1)).normalize());
    [a0, a1, a0.cross(&a1)]
}

fn upright_pca_frame(centroids: &[(Vec3, f64)]) -> [Vec3; 3] {
    let total: f64 = centroids.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return [Vec3::x(), Vec3::y(), Vec3::z()];
    }
    let mean: Vec3 = centroids.iter().map(|(c, a)| c * *a).sum::<Vec3>() / total;
    let mut cov = Matrix2::zeros();
    for (c, a) in centroids {
        let d = nalgebra::Vector2::new(c.x - mean.x, c.z - mean.z);
        cov += d * d.transpose() * *a;
    }
    let eig = SymmetricEigen::new(cov);
    let k = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let v = eig.eigenvectors.column(k);
    let a0 = canonical_sign(Vec3::new(v[0], 0.0, v[1]).normalize());
    let a1 = Vec3::y();
    [a0, a1, a0.cross(&a1)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes::cube_mesh;
    use crate::mesh::rotate_upright;

    fn fit_mesh(v: &[Vec3], t: &[[usize; 3]], mode: ObbMode) -> Obb {
        let tris: Vec<[Vec3; 3]> = t.iter().map(|f| [v[f[0]], v[f[1]], v[f[2]]]).collect();
        let cents: Vec<(Vec3, f64)> = tris
            .iter()
            .map(|t| ((t[0] + t[1] + t[2]) / 3.0, triangle_area(&t[0], &t[1], &t[2])))
            .collect();
        Obb::fit(v, &cents, &tris, mode)
    }

    #[test]
    fn axes_are_orthonormal_and_contain_vertices() {
        let (v, t) = cube_mesh(Vec3::new(1.0, 2.0, 3.0), Vec3::new(2.0, 0.5, 1.0));
        let v: Vec<Vec3> = v
            .iter()
            .map(|p| {
                let q = rotate_upright(p, 0.7);
                // tilt about x
                let (s, c) = 0.3f64.sin_cos();
                Vec3::new(q.x, c * q.y - s * q.z, s * q.y + c * q.z)
            })
            .collect();
        for mode in [ObbMode::Free, ObbMode::Upright] {
            let obb = fit_mesh(&v, &t, mode);
            for i in 0..3 {
                for j in 0..3 {
                    let d = obb.axes[i].dot(&obb.axes[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-6);
                }
            }
            assert!((obb.axes[0].cross(&obb.axes[1]) - obb.axes[2]).norm() < 1e-9);
            for p in &v {
                assert!(obb.contains(p, 1e-6 * obb.diagonal()));
            }
            if mode == ObbMode::Upright {
                assert!((obb.axes[1] - Vec3::y()).norm() < 1e-12);
            } else {
                assert!((obb.volume() - 2.0 * 0.5 * 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn top_face_of_unit_cube() {
        let (v, t) = cube_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let obb = fit_mesh(&v, &t, ObbMode::Free);
        let top = obb.face_rect(FaceSide::Top);
        assert!((top.center - Vec3::new(0.5, 1.0, 0.5)).norm() < 1e-12);
        assert!((top.half_extents[0] - 0.5).abs() < 1e-12);
        assert!((top.half_extents[1] - 0.5).abs() < 1e-12);
        assert!((top.height - 1.0).abs() < 1e-12);
        let bottom = obb.face_rect(FaceSide::Bottom);
        assert!((bottom.center - Vec3::new(0.5, 0.0, 0.5)).norm() < 1e-12);
        assert!(bottom.normal.y < -0.99);
    }

    #[test]
    fn top_face_reidentified_after_rotation_about_x() {
        let obb = Obb {
            center: Vec3::zeros(),
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: Vec3::new(0.5, 1.0, 2.0),
        };
        let (s, c) = std::f64::consts::FRAC_PI_2.sin_cos();
        let rot = |v: Vec3| Vec3::new(v.x, c * v.y - s * v.z, s * v.y + c * v.z);
        let r = Obb {
            axes: [rot(obb.axes[0]), rot(obb.axes[1]), rot(obb.axes[2])],
            ..obb
        };
        // Enumerate all six face normals and pick the one with max +Y.
        let mut best = (f64::NEG_INFINITY, Vec3::zeros(), 0.0);
        for k in 0..3 {
            for sgn in [1.0, -1.0] {
                let n = r.axes[k] * sgn;
                if n.y > best.0 + 1e-12 {
                    best = (n.y, n, r.half_extents[k]);
                }
            }
        }
        let top = r.face_rect(FaceSide::Top);
        assert!((top.normal - best.1).norm() < 1e-12);
        assert!((top.center.y - best.2).abs() < 1e-12);
        assert!((top.height - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_box_top_equals_bottom() {
        let obb = Obb {
            center: Vec3::new(0.5, 0.0, 0.5),
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: Vec3::new(0.5, 0.0, 0.5),
        };
        let top = obb.face_rect(FaceSide::Top);
        let bottom = obb.face_rect(FaceSide::Bottom);
        assert_eq!(top.center, bottom.center);
        assert_eq!(top.half_extents, bottom.half_extents);
    }

    #[test]
    fn separating_axis_overlap() {
        let a = Obb {
            center: Vec3::zeros(),
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: Vec3::repeat(1.0),
        };
        let mut b = a;
        b.center = Vec3::new(2.5, 0.0, 0.0);
        assert!(!a.intersects(&b));
        b.center = Vec3::new(2.0, 0.0, 0.0);
        assert!(a.intersects(&b));
        let r = std::f64::consts::FRAC_PI_4;
        b.axes = [rotate_upright(&Vec3::x(), r), Vec3::y(), rotate_upright(&Vec3::z(), r)];
        b.center = Vec3::new(2.3, 0.0, 0.0);
        assert!(a.intersects(&b));
        b.center = Vec3::new(2.5, 0.0, 0.0);
        assert!(!a.intersects(&b));
    }
}
