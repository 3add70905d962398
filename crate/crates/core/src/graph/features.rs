//! Pairwise relation features between subgroups.
//!
//! Every function here returns `None` when the relation does not exist.
//! All feature entries lie in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{FaceSide, Obb, Vec3};
use crate::preprocess::align::{golden_section, rotated_chamfer, rotation_candidates_guided, ANGLE_STEP_DEG};
use crate::spatial::{Bvh, KdTree};

/// Distance scales, as fractions of the pair's reference length.
pub const SCALES: [f64; 4] = [0.01, 0.025, 0.05, 0.10];

/// Cells per side of the rasterized support face.
pub const SUPPORT_GRID: usize = 32;

/// Monte Carlo samples for the containment volume estimate.
pub const CONTAINMENT_SAMPLES: usize = 4096;

/// Points per set used in the rotation grid search for similarity.
pub const SIMILARITY_GUIDE_POINTS: usize = 512;

/// Chamfer distance (as a fraction of the average diagonal) at which similarity vanishes.
pub const SIMILARITY_CUTOFF: f64 = 0.10;

/// Fractions of `samples` whose distance to the surface in `surface` is below
/// each scale times `reference`. `None` if no sample is within the largest scale.
pub fn proximity_features(samples: &[Vec3], surface: &Bvh, reference: f64) -> Option<[f64; 4]> {
    if samples.is_empty() || surface.is_empty() {
        return None;
    }
    let mut counts = [0usize; 4];
    for p in samples {
        let d = surface.nearest(p).unwrap().distance_sq.sqrt();
        for (k, s) in SCALES.iter().enumerate() {
            if d < s * reference {
                counts[k] += 1;
            }
        }
    }
    let n = samples.len() as f64;
    let f = counts.map(|c| c as f64 / n);
    (f[3] > 0.0).then_some(f)
}

/// Fractions of the bottom face of `upper` lying above the top face of
/// `lower`, with a vertical gap of at most each scale times `reference`.
///
/// The bottom face is rasterized into a regular grid; each cell center is
/// dropped along -Y onto the plane of the lower box's top face. `None` if no
/// cell qualifies at the largest scale.
pub fn support_features(upper: &Obb, lower: &Obb, reference: f64) -> Option<[f64; 4]> {
    let bottom = upper.face_rect(FaceSide::Bottom);
    let top = lower.face_rect(FaceSide::Top);
    if top.normal.y.abs() < 1e-9 {
        return None;
    }
    let slack = 1e-9 * reference.max(f64::MIN_POSITIVE) + 1e-12 * upper.diagonal().max(lower.diagonal());
    let n = SUPPORT_GRID;
    let mut counts = [0usize; 4];
    for a in 0..n {
        for b in 0..n {
            let s = 2.0 * (a as f64 + 0.5) / n as f64 - 1.0;
            let t = 2.0 * (b as f64 + 0.5) / n as f64 - 1.0;
            let p = bottom.point(s, t);
            let gap = (p - top.center).dot(&top.normal) / top.normal.y;
            let q = p - Vec3::y() * gap;
            if !top.contains_in_plane(&q, slack) || gap < -slack {
                continue;
            }
            for (k, sc) in SCALES.iter().enumerate() {
                if gap <= sc * reference + slack {
                    counts[k] += 1;
                }
            }
        }
    }
    let total = (n * n) as f64;
    let f = counts.map(|c| c as f64 / total);
    (f[3] > 0.0).then_some(f)
}

/// Reference length for support: the mean vertical extent of the two boxes,
/// replaced by `1e-6 · scene_diagonal` when both boxes are flat.
pub fn support_reference(a: &Obb, b: &Obb, scene_diagonal: f64) -> f64 {
    let h = 0.5 * (a.height() + b.height());
    if h > 0.0 {
        h
    } else {
        1e-6 * scene_diagonal
    }
}

/// Copy of `obb` where every zero extent is replaced by `1e-4` of the diagonal
/// (or of `fallback` if the box is a point).
pub fn thickened(obb: &Obb, fallback: f64) -> Obb {
    let diag = obb.diagonal();
    let full = 1e-4 * if diag > 0.0 { diag } else { fallback };
    let mut out = *obb;
    for k in 0..3 {
        if out.half_extents[k] <= 0.0 {
            out.half_extents[k] = 0.5 * full;
        }
    }
    out
}

/// Monte Carlo estimate of (fraction of `a`'s volume inside `b`, volume IoU).
/// `None` if no sample of `a` falls inside `b`.
pub fn containment_features(a: &Obb, b: &Obb, seed: u64) -> Option<[f64; 2]> {
    let fallback = a.diagonal().max(b.diagonal()).max(1.0);
    let a = thickened(a, fallback);
    let b = thickened(b, fallback);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    for _ in 0..CONTAINMENT_SAMPLES {
        let q = Vec3::from_fn(|k, _| (2.0 * rng.gen::<f64>() - 1.0) * a.half_extents[k]);
        if b.contains(&a.from_local(&q), 0.0) {
            inside += 1;
        }
    }
    if inside == 0 {
        return None;
    }
    let frac = inside as f64 / CONTAINMENT_SAMPLES as f64;
    let (va, vb) = (a.volume(), b.volume());
    let inter = frac * va;
    let iou = (inter / (va + vb - inter)).clamp(0.0, 1.0);
    Some([frac, iou])
}

/// Outcome of the similarity test for one pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    /// Upright rotation (radians) applied to the first set.
    pub angle: f64,
    /// Symmetric Chamfer distance after alignment.
    pub distance: f64,
    /// `1 - distance / (cutoff · reference)` when below the cutoff.
    pub feature: Option<f64>,
}

/// Rotation-invariant lower bound of the aligned Chamfer distance: each point
/// is reduced to (height, distance from the vertical axis), and distances in
/// that plane never exceed the 3-D distances.
pub fn chamfer_lower_bound(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let flat = |s: &[Vec3]| s.iter().map(|p| Vec3::new(p.y, p.x.hypot(p.z), 0.0)).collect::<Vec<_>>();
    crate::preprocess::align::chamfer(&flat(a), &flat(b))
}

/// Aligns centered sample sets `a` and `b` about +Y and scores their similarity.
/// The three best minima of the grid search are refined on the full sets.
pub fn similarity_feature(a: &[Vec3], b: &[Vec3], reference: f64) -> Similarity {
    let cutoff = SIMILARITY_CUTOFF * reference;
    if a.is_empty() || b.is_empty() {
        return Similarity { angle: 0.0, distance: f64::INFINITY, feature: None };
    }
    let bound = chamfer_lower_bound(a, b);
    if bound >= cutoff {
        return Similarity { angle: 0.0, distance: bound, feature: None };
    }
    let tb = KdTree::new(b.to_vec());
    let f = |t: f64| rotated_chamfer(a, b, &tb, t);
    let step = ANGLE_STEP_DEG.to_radians();
    let (angle, distance) = rotation_candidates_guided(a, b, 3, SIMILARITY_GUIDE_POINTS)
        .into_iter()
        .map(|(t0, _)| {
            let d0 = f(t0);
            let (t, d) = golden_section(f, t0 - step, t0 + step);
            if d < d0 {
                (t.rem_euclid(std::f64::consts::TAU), d)
            } else {
                (t0, d0)
            }
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("at least one candidate");
    Similarity { angle, distance, feature: similarity_from_distance(distance, reference) }
}

/// `1 - d / (0.1 · reference)` if `d` is strictly below the cutoff.
pub fn similarity_from_distance(distance: f64, reference: f64) -> Option<f64> {
    let cutoff = SIMILARITY_CUTOFF * reference;
    (distance < cutoff).then(|| (1.0 - distance / cutoff).clamp(0.0, 1.0))
}
