//! Rigid alignment about the upright axis and Chamfer distance.

use crate::mesh::{rotate_upright, Vec3};
use crate::spatial::KdTree;

/// Grid step of the exhaustive rotation search.
pub const ANGLE_STEP_DEG: f64 = 1.0;

/// Guide sets are subsampled to at most this many points for the search.
pub const MAX_GUIDE_POINTS: usize = 128;

const GOLDEN_TOL: f64 = 1e-9;

/// Symmetric Chamfer distance: the mean of the two directed mean
/// nearest-neighbour distances. Zero if either set is empty.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let ta = KdTree::new(a.to_vec());
    let tb = KdTree::new(b.to_vec());
    chamfer_with_trees(a, &ta, b, &tb)
}

fn chamfer_with_trees(a: &[Vec3], ta: &KdTree, b: &[Vec3], tb: &KdTree) -> f64 {
    let ab: f64 = a.iter().map(|p| tb.nearest(p).unwrap().1.sqrt()).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| ta.nearest(p).unwrap().1.sqrt()).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}

/// Every `len / max`-th point, keeping at most `max`.
pub fn subsample(points: &[Vec3], max: usize) -> Vec<Vec3> {
    if points.len() <= max {
        return points.to_vec();
    }
    (0..max).map(|i| points[i * points.len() / max]).collect()
}

/// Chamfer distance after rotating `a` by `angle` about the upright axis.
/// Both sets are expected to be centered on their reference points.
pub fn rotated_chamfer(a: &[Vec3], b: &[Vec3], tb: &KdTree, angle: f64) -> f64 {
    let ra: Vec<Vec3> = a.iter().map(|p| rotate_upright(p, angle)).collect();
    let ta = KdTree::new(ra.clone());
    chamfer_with_trees(&ra, &ta, b, tb)
}

/// Upright rotation (radians, in `[0, 2π)`) minimizing the Chamfer distance
/// from centered set `a` to centered set `b`: a 1° grid followed by a
/// golden-section refinement around the best grid angle.
pub fn search_upright_rotation(a: &[Vec3], b: &[Vec3]) -> (f64, f64) {
    rotation_candidates(a, b, 1).into_iter().next().unwrap_or((0.0, 0.0))
}

/// Up to `max` refined local minima of the rotation search, best first.
/// Symmetric shapes have several equally good alignments; callers that need
/// an exact match can try each.
pub fn rotation_candidates(a: &[Vec3], b: &[Vec3], max: usize) -> Vec<(f64, f64)> {
    rotation_candidates_guided(a, b, max, MAX_GUIDE_POINTS)
}

/// [`rotation_candidates`] with at most `guide` points of each set in the search.
pub fn rotation_candidates_guided(a: &[Vec3], b: &[Vec3], max: usize, guide: usize) -> Vec<(f64, f64)> {
    let a = subsample(a, guide);
    let b = subsample(b, guide);
    if a.is_empty() || b.is_empty() || max == 0 {
        return vec![(0.0, 0.0)];
    }
    let tb = KdTree::new(b.clone());
    let steps = (360.0 / ANGLE_STEP_DEG).round() as usize;
    let step = ANGLE_STEP_DEG.to_radians();
    let grid: Vec<f64> = (0..steps)
        .map(|k| rotated_chamfer(&a, &b, &tb, k as f64 * step))
        .collect();
    let mut minima: Vec<usize> = (0..steps)
        .filter(|&k| {
            let prev = grid[(k + steps - 1) % steps];
            let next = grid[(k + 1) % steps];
            grid[k] <= prev && grid[k] <= next
        })
        .collect();
    minima.sort_by(|&x, &y| grid[x].total_cmp(&grid[y]).then(x.cmp(&y)));
    minima.truncate(max);
    minima
        .into_iter()
        .map(|k| {
            let t0 = k as f64 * step;
            let f = |t: f64| rotated_chamfer(&a, &b, &tb, t);
            let (t, d) = golden_section(f, t0 - step, t0 + step);
            let (t, d) = if d <= grid[k] { (t, d) } else { (t0, grid[k]) };
            (t.rem_euclid(std::f64::consts::TAU), d)
        })
        .collect()
}

/// Minimizes a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while (hi - lo).abs() > GOLDEN_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Closed-form least-squares upright rotation for paired points `a[i] ↔ b[i]`.
pub fn procrustes_upright(a: &[Vec3], b: &[Vec3]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for (p, q) in a.iter().zip(b) {
        s += q.x * p.z - q.z * p.x;
        c += q.x * p.x + q.z * p.z;
    }
    s.atan2(c).rem_euclid(std::f64::consts::TAU)
}
