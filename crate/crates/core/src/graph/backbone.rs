//! Per-point descriptors pooled into node features.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::binio::{count_u32, read_f32s, read_header, write_f32s, write_header, Header};
use crate::error::{Error, Result};
use crate::mesh::{Building, Vec3};
use crate::preprocess::PointSet;
use crate::spatial::KdTree;

pub const BACKBONE_DIM: usize = 31;

const MAGIC: &[u8; 4] = b"MLPF";
const VERSION: u32 = 1;

/// Source of per-point feature vectors of length [`BACKBONE_DIM`].
pub trait Backbone: Send + Sync {
    fn name(&self) -> String;
    fn point_features(&self, building: &Building, points: &PointSet) -> Result<Vec<[f64; BACKBONE_DIM]>>;
}

/// All-zero features (node geometry only).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroBackbone;

impl Backbone for ZeroBackbone {
    fn name(&self) -> String {
        "zero".into()
    }

    fn point_features(&self, _: &Building, points: &PointSet) -> Result<Vec<[f64; BACKBONE_DIM]>> {
        Ok(vec![[0.0; BACKBONE_DIM]; points.len()])
    }
}

/// Handcrafted descriptors:
///
/// | slots  | content                                                    |
/// |--------|------------------------------------------------------------|
/// | 0..3   | surface normal                                             |
/// | 3      | height above the lowest vertex / scene diagonal            |
/// | 4..7   | RGB color (zero without colors)                            |
/// | 7..13  | local shape at radius 2% of the scene diagonal             |
/// | 13..19 | local shape at radius 8% of the scene diagonal             |
/// | 19..31 | zero                                                       |
///
/// The local shape block holds linearity, planarity, scattering, the
/// verticality of the local normal, and the upright components of the
/// principal direction and of the local normal, from the covariance of
/// neighbouring samples.
#[derive(Debug, Clone, Copy)]
pub struct GeometricBackbone {
    /// Neighbourhoods are searched in at most this many evenly strided samples.
    pub max_support_points: usize,
}

impl Default for GeometricBackbone {
    fn default() -> Self {
        GeometricBackbone {
            max_support_points: 8192,
        }
    }
}

const RADII: [f64; 2] = [0.02, 0.08];

fn local_shape(center: &Vec3, tree: &KdTree, radius: f64) -> [f64; 6] {
    let ids = tree.within_radius(center, radius);
    if ids.len() < 3 {
        return [0.0; 6];
    }
    let mean = ids.iter().map(|&i| *tree.point(i)).sum::<Vec3>() / ids.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in &ids {
        let d = tree.point(i) - mean;
        cov += d * d.transpose();
    }
    cov /= ids.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    if l[0] <= 0.0 {
        return [0.0; 6];
    }
    let principal = eig.eigenvectors.column(order[0]).into_owned();
    let normal = eig.eigenvectors.column(order[2]).into_owned();
    [
        (l[0] - l[1]) / l[0],
        (l[1] - l[2]) / l[0],
        l[2] / l[0],
        1.0 - normal.y.abs(),
        principal.y.abs(),
        normal.y.abs(),
    ]
}

impl Backbone for GeometricBackbone {
    fn name(&self) -> String {
        "geom".into()
    }

    fn point_features(&self, building: &Building, points: &PointSet) -> Result<Vec<[f64; BACKBONE_DIM]>> {
        let aabb = building.aabb();
        let diag = aabb.diagonal().max(f64::MIN_POSITIVE);
        let n = points.len();
        let stride = n.div_ceil(self.max_support_points.max(1)).max(1);
        let support: Vec<Vec3> = points.positions.iter().step_by(stride).copied().collect();
        let tree = KdTree::new(support);
        Ok((0..n)
            .into_par_iter()
            .map(|i| {
                let mut f = [0.0; BACKBONE_DIM];
                let p = points.positions[i];
                f[0..3].copy_from_slice(points.normals[i].as_slice());
                f[3] = (p.y - aabb.min.y) / diag;
                if let Some(c) = &points.colors {
                    f[4..7].copy_from_slice(c[i].as_slice());
                }
                for (k, r) in RADII.iter().enumerate() {
                    let shape = local_shape(&p, &tree, r * diag);
                    f[7 + 6 * k..13 + 6 * k].copy_from_slice(&shape);
                }
                f
            })
            .collect())
    }
}

/// Features precomputed elsewhere, stored aligned with the point set.
///
/// File layout: 16-byte header (`MLPF`, version 1, point count, flags 0)
/// followed by `count × 31` little-endian f32 values.
#[derive(Debug, Clone)]
pub struct FileBackbone {
    pub path: PathBuf,
}

impl Backbone for FileBackbone {
    fn name(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn point_features(&self, _: &Building, points: &PointSet) -> Result<Vec<[f64; BACKBONE_DIM]>> {
        let feats = read_point_features(&mut BufReader::new(File::open(&self.path)?))?;
        if feats.len() != points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} holds {} feature rows for {} points",
                self.path.display(),
                feats.len(),
                points.len()
            )));
        }
        Ok(feats)
    }
}

pub fn write_point_features(w: &mut impl Write, feats: &[[f64; BACKBONE_DIM]]) -> Result<()> {
    write_header(w, MAGIC, Header { version: VERSION, count: count_u32(feats.len())?, flags: 0 })?;
    for f in feats {
        write_f32s(w, f.iter().copied())?;
    }
    Ok(())
}

pub fn read_point_features(r: &mut impl Read) -> Result<Vec<[f64; BACKBONE_DIM]>> {
    let h = read_header(r, MAGIC, VERSION)?;
    (0..h.count)
        .map(|_| {
            let v = read_f32s(r, BACKBONE_DIM)?;
            let mut f = [0.0; BACKBONE_DIM];
            f.copy_from_slice(&v);
            Ok(f)
        })
        .collect()
}

pub fn save_point_features(path: impl AsRef<Path>, feats: &[[f64; BACKBONE_DIM]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_point_features(&mut w, feats)?;
    w.flush()?;
    Ok(())
}

/// Parses `zero`, `geom` or `file:<path>`.
pub fn backbone_from_spec(spec: &str) -> Result<Box<dyn Backbone>> {
    match spec {
        "zero" => Ok(Box::new(ZeroBackbone)),
        "geom" => Ok(Box::new(GeometricBackbone::default())),
        s => match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(Box::new(FileBackbone { path: PathBuf::from(p) })),
            _ => Err(Error::Config(format!("unknown backbone `{spec}` (expected zero, geom or file:<path>)"))),
        },
    }
}

/// Mean feature of each subgroup's points; zero for subgroups without points.
pub fn pool_by_subgroup(feats: &[[f64; BACKBONE_DIM]], points: &PointSet, num_subgroups: usize) -> Vec<[f64; BACKBONE_DIM]> {
    let mut sums = vec![[0.0; BACKBONE_DIM]; num_subgroups];
    let mut counts = vec![0usize; num_subgroups];
    for (f, &g) in feats.iter().zip(&points.subgroups) {
        counts[g] += 1;
        for k in 0..BACKBONE_DIM {
            sums[g][k] += f[k];
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes::quad_mesh;
    use crate::mesh::Subgroup;
    use crate::preprocess::sample_points;

    fn plane() -> Building {
        let (v, t) = quad_mesh(Vec3::zeros(), Vec3::x(), Vec3::z());
        Building::from_parts(v, t, vec![Subgroup { name: "floor".into(), triangles: vec![0, 1] }]).unwrap()
    }

    #[test]
    fn geometric_features_on_a_plane() {
        let b = plane();
        let ps = sample_points(&b, 400, 1).unwrap();
        let feats = GeometricBackbone::default().point_features(&b, &ps).unwrap();
        for f in &feats {
            assert!(f.iter().all(|v| v.is_finite()));
            assert!((f[1].abs() - 1.0).abs() < 1e-12);
            assert!(f[3].abs() < 1e-12);
            assert!(f[19..].iter().all(|&v| v == 0.0));
        }
        // Points away from the border see a planar neighbourhood at the large radius.
        let mid = (0..ps.len())
            .find(|&i| (ps.positions[i] - Vec3::new(0.5, 0.0, 0.5)).norm() < 0.1)
            .unwrap();
        assert!(feats[mid][13 + 2] < 1e-9);
        assert!((feats[mid][13 + 5] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn file_round_trip_and_count_check() {
        let b = plane();
        let ps = sample_points(&b, 10, 1).unwrap();
        let feats: Vec<[f64; BACKBONE_DIM]> = (0..10).map(|i| [i as f64; BACKBONE_DIM]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        save_point_features(&path, &feats).unwrap();
        let fb = FileBackbone { path: path.clone() };
        assert_eq!(fb.point_features(&b, &ps).unwrap(), feats);
        let short = sample_points(&b, 5, 1).unwrap();
        assert!(matches!(fb.point_features(&b, &short), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pooling_averages_per_subgroup() {
        let ps = PointSet {
            positions: vec![Vec3::zeros(); 3],
            normals: vec![Vec3::y(); 3],
            colors: None,
            triangles: vec![0, 0, 1],
            subgroups: vec![0, 0, 2],
        };
        let feats = vec![[1.0; BACKBONE_DIM], [3.0; BACKBONE_DIM], [5.0; BACKBONE_DIM]];
        let pooled = pool_by_subgroup(&feats, &ps, 3);
        assert_eq!(pooled[0], [2.0; BACKBONE_DIM]);
        assert_eq!(pooled[1], [0.0; BACKBONE_DIM]);
        assert_eq!(pooled[2], [5.0; BACKBONE_DIM]);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!(backbone_from_spec("zero").unwrap().name(), "zero");
        assert_eq!(backbone_from_spec("geom").unwrap().name(), "geom");
        assert_eq!(backbone_from_spec("file:/x").unwrap().name(), "file:/x");
        assert!(backbone_from_spec("minkowski").is_err());
    }
}
