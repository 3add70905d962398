//! Removal of subgroups that cannot be seen from outside the building.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Building, Vec3};
use crate::spatial::geom::DEGENERATE_AREA;
use crate::spatial::Bvh;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InteriorConfig {
    pub viewpoints: usize,
    pub samples_per_triangle: usize,
    pub seed: u64,
}

impl Default for InteriorConfig {
    fn default() -> Self {
        InteriorConfig {
            viewpoints: 50,
            samples_per_triangle: 10,
            seed: 0,
        }
    }
}

/// `n` points on a sphere, spread with the golden-angle spiral.
pub fn fibonacci_sphere(n: usize, center: Vec3, radius: f64) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            center + Vec3::new(r * phi.cos(), y, r * phi.sin()) * radius
        })
        .collect()
}

/// Per-subgroup visibility: true if some ray from one of its samples reaches
/// a viewpoint without crossing another subgroup.
pub fn exterior_subgroups(building: &Building, config: &InteriorConfig) -> Vec<bool> {
    let aabb = building.aabb();
    let diag = aabb.diagonal();
    let views = fibonacci_sphere(config.viewpoints, aabb.center(), 2.0 * diag);
    let offset = 1e-5 * diag;
    let owners = building.triangle_owners();
    let bvh = Bvh::new(
        (0..building.triangles.len())
            .filter(|&t| building.triangle_area(t) > DEGENERATE_AREA)
            .map(|t| (building.triangle(t), t, owners[t])),
    );
    (0..building.subgroups.len())
        .into_par_iter()
        .map(|g| {
            building.subgroups[g].triangles.iter().any(|&t| {
                if building.triangle_area(t) <= DEGENERATE_AREA {
                    return false;
                }
                let [a, b, c] = building.triangle(t);
                let n = building.triangle_normal(t);
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                (0..config.samples_per_triangle).any(|_| {
                    let r1: f64 = rng.gen::<f64>().sqrt();
                    let r2: f64 = rng.gen();
                    let p = a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2);
                    views.iter().any(|v| {
                        let toward = v - p;
                        let o = p + n * (offset * n.dot(&toward).signum());
                        let dir = v - o;
                        !bvh.any_hit(&o, &dir, 0.0, 1.0, |tag| tag != g)
                    })
                })
            })
        })
        .collect()
}

/// Drops interior subgroups, returning the filtered building and the kept
/// original subgroup indices.
pub fn remove_interior(building: &Building, config: &InteriorConfig) -> Result<(Building, Vec<usize>)> {
    let exterior = exterior_subgroups(building, config);
    let keep: Vec<usize> = (0..exterior.len()).filter(|&g| exterior[g]).collect();
    if keep.is_empty() && !exterior.is_empty() {
        return Err(Error::Degenerate(
            "every subgroup is interior; normals may be inverted".into(),
        ));
    }
    if keep.len() < exterior.len() {
        log::info!("removed {} interior subgroups", exterior.len() - keep.len());
    }
    Ok((building.retain_subgroups(&keep)?, keep))
}
