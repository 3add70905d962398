//! Detection of subgroups that are exact copies of each other up to a
//! rotation about the upright axis and a translation.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use super::align::{procrustes_upright, rotation_candidates};
use crate::mesh::{rotate_upright, Building, SubgroupSummary, Vec3};
use crate::spatial::geom::triangle_centroid;
use crate::spatial::KdTree;

/// Number of local minima of the rotation search tried per pair.
const ROTATION_CANDIDATES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DedupConfig {
    /// Maximum correspondence distance as a fraction of the average OBB diagonal.
    pub tolerance: f64,
    /// Maximum relative surface-area difference.
    pub area_tolerance: f64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            tolerance: 1e-6,
            area_tolerance: 1e-4,
        }
    }
}

/// A verified duplicate: rotating `a` by `rotation_deg` about +Y around its
/// vertex barycenter and translating by `translation` yields `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuplicatePair {
    pub a: usize,
    pub b: usize,
    pub rotation_deg: f64,
    pub translation: Vec3,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DuplicateSets {
    /// Disjoint classes covering every subgroup, each sorted, ordered by first member.
    pub classes: Vec<Vec<usize>>,
    pub pairs: Vec<DuplicatePair>,
}

impl DuplicateSets {
    /// Class index of every subgroup.
    pub fn class_of(&self, num_subgroups: usize) -> Vec<usize> {
        let mut out = vec![0; num_subgroups];
        for (c, members) in self.classes.iter().enumerate() {
            for &g in members {
                out[g] = c;
            }
        }
        out
    }

    pub fn are_duplicates(&self, a: usize, b: usize) -> bool {
        self.classes.iter().any(|c| c.contains(&a) && c.contains(&b))
    }
}

/// Per-subgroup data used by the pair test.
struct Profile {
    barycenter: Vec3,
    /// Vertex positions relative to `barycenter`.
    local: Vec<Vec3>,
    /// Oriented triangles over local vertex indices, rotated so the smallest index leads.
    faces: BTreeSet<[usize; 3]>,
    triangles: usize,
    area: f64,
    diagonal: f64,
    sorted_heights: Vec<f64>,
    sorted_radii: Vec<f64>,
    guides: Vec<Vec3>,
}

impl Profile {
    fn new(building: &Building, g: usize, summary: &SubgroupSummary) -> Profile {
        let ids = building.subgroup_vertices(g);
        let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let positions: Vec<Vec3> = ids.iter().map(|&v| building.vertices[v]).collect();
        let barycenter = positions.iter().sum::<Vec3>() / positions.len().max(1) as f64;
        let local: Vec<Vec3> = positions.iter().map(|p| p - barycenter).collect();
        let mut faces = BTreeSet::new();
        let mut guides = local.clone();
        for &t in &building.subgroups[g].triangles {
            let f = building.triangles[t].map(|v| index[&v]);
            faces.insert(canonical(f));
            guides.push(triangle_centroid(&local[f[0]], &local[f[1]], &local[f[2]]));
        }
        let mut sorted_heights: Vec<f64> = local.iter().map(|p| p.y).collect();
        sorted_heights.sort_by(f64::total_cmp);
        let mut sorted_radii: Vec<f64> = local.iter().map(|p| p.x.hypot(p.z)).collect();
        sorted_radii.sort_by(f64::total_cmp);
        Profile {
            barycenter,
            local,
            faces,
            triangles: building.subgroups[g].triangles.len(),
            area: summary.area,
            diagonal: summary.diagonal(),
            sorted_heights,
            sorted_radii,
            guides,
        }
    }
}

/// Cyclic rotation of a triangle that puts its smallest index first.
fn canonical(f: [usize; 3]) -> [usize; 3] {
    let k = (0..3).min_by_key(|&k| f[k]).unwrap();
    [f[k], f[(k + 1) % 3], f[(k + 2) % 3]]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Cheap necessary conditions. Any rotation about +Y preserves heights and
/// radial distances relative to the barycenter, so their sorted lists must
/// agree to within the correspondence tolerance.
fn prefilter(pa: &Profile, pb: &Profile, config: &DedupConfig) -> bool {
    if pa.local.len() != pb.local.len() || pa.triangles != pb.triangles {
        return false;
    }
    let scale = pa.area.max(pb.area);
    if (pa.area - pb.area).abs() > config.area_tolerance * scale {
        return false;
    }
    let delta = config.tolerance * 0.5 * (pa.diagonal + pb.diagonal);
    max_abs_diff(&pa.sorted_heights, &pb.sorted_heights) < delta
        && max_abs_diff(&pa.sorted_radii, &pb.sorted_radii) < delta
}

/// Mutual nearest-vertex correspondence `a → b` after rotating `a` by `angle`,
/// or `None` if it is not a bijection within `delta`.
fn correspondence(pa: &Profile, pb: &Profile, tb: &KdTree, angle: f64, delta: f64) -> Option<Vec<usize>> {
    let rotated: Vec<Vec3> = pa.local.iter().map(|p| rotate_upright(p, angle)).collect();
    let ta = KdTree::new(rotated.clone());
    let mut map = Vec::with_capacity(rotated.len());
    for (i, p) in rotated.iter().enumerate() {
        let (j, d2) = tb.nearest(p)?;
        if d2.sqrt() >= delta {
            return None;
        }
        if ta.nearest(&pb.local[j])?.0 != i {
            return None;
        }
        map.push(j);
    }
    Some(map)
}

fn try_match(pa: &Profile, pb: &Profile, config: &DedupConfig) -> Option<f64> {
    let delta = config.tolerance * 0.5 * (pa.diagonal + pb.diagonal);
    let tb = KdTree::new(pb.local.clone());
    for (angle, _) in rotation_candidates(&pa.guides, &pb.guides, ROTATION_CANDIDATES) {
        // Coarse correspondences may be off by the search error; refine first.
        let coarse: Vec<usize> = pa
            .local
            .iter()
            .map(|p| tb.nearest(&rotate_upright(p, angle)).unwrap().0)
            .collect();
        let paired: Vec<Vec3> = coarse.iter().map(|&j| pb.local[j]).collect();
        let refined = procrustes_upright(&pa.local, &paired);
        let Some(map) = correspondence(pa, pb, &tb, refined, delta) else {
            continue;
        };
        let mapped: BTreeSet<[usize; 3]> = pa.faces.iter().map(|f| canonical(f.map(|v| map[v]))).collect();
        if mapped == pb.faces {
            return Some(refined);
        }
    }
    None
}

/// Tests one pair of subgroups.
pub fn match_pair(
    building: &Building,
    summaries: &[SubgroupSummary],
    a: usize,
    b: usize,
    config: &DedupConfig,
) -> Option<DuplicatePair> {
    let pa = Profile::new(building, a, &summaries[a]);
    let pb = Profile::new(building, b, &summaries[b]);
    match_profiles(&pa, &pb, a, b, config)
}

fn match_profiles(pa: &Profile, pb: &Profile, a: usize, b: usize, config: &DedupConfig) -> Option<DuplicatePair> {
    if !prefilter(pa, pb, config) {
        return None;
    }
    try_match(pa, pb, config).map(|angle| DuplicatePair {
        a,
        b,
        rotation_deg: angle.to_degrees().rem_euclid(360.0),
        translation: pb.barycenter - pa.barycenter,
    })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Partitions subgroups into classes of exact duplicates.
pub fn detect_duplicates(building: &Building, summaries: &[SubgroupSummary], config: &DedupConfig) -> DuplicateSets {
    let n = building.subgroups.len();
    let profiles: Vec<Profile> = (0..n)
        .into_par_iter()
        .map(|g| Profile::new(building, g, &summaries[g]))
        .collect();
    let mut buckets: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (g, p) in profiles.iter().enumerate() {
        buckets.entry((p.local.len(), p.triangles)).or_default().push(g);
    }
    let mut candidates = Vec::new();
    for members in buckets.values() {
        for (k, &x) in members.iter().enumerate() {
            for &y in &members[k + 1..] {
                let (a, b) = (x.min(y), x.max(y));
                if prefilter(&profiles[a], &profiles[b], config) {
                    candidates.push((a, b));
                }
            }
        }
    }
    candidates.sort_unstable();
    let pairs: Vec<DuplicatePair> = candidates
        .par_iter()
        .filter_map(|&(a, b)| match_profiles(&profiles[a], &profiles[b], a, b, config))
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for p in &pairs {
        let (ra, rb) = (find(&mut parent, p.a), find(&mut parent, p.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for g in 0..n {
        let r = find(&mut parent, g);
        let c = *slot.entry(r).or_insert_with(|| {
            classes.push(Vec::new());
            classes.len() - 1
        });
        classes[c].push(g);
    }
    DuplicateSets { classes, pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes::{quad_mesh, quad_mesh_flipped};
    use crate::mesh::{ObbMode, Subgroup};

    fn building(parts: Vec<(Vec<Vec3>, Vec<[usize; 3]>)>) -> Building {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut subgroups = Vec::new();
        for (i, (v, t)) in parts.into_iter().enumerate() {
            let base = vertices.len();
            let start = triangles.len();
            vertices.extend(v);
            triangles.extend(t.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
            subgroups.push(Subgroup { name: format!("g{i}"), triangles: (start..triangles.len()).collect() });
        }
        Building::from_parts(vertices, triangles, subgroups).unwrap()
    }

    /// An L-shaped wedge with no rotational symmetry about +Y.
    fn wedge() -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.5),
            Vec3::new(0.5, 0.0, 1.5),
            Vec3::new(0.3, 1.2, 0.2),
        ];
        let t = vec![[0, 2, 1], [0, 3, 2], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        (v, t)
    }

    fn moved(part: &(Vec<Vec3>, Vec<[usize; 3]>), deg: f64, shift: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
        let c = part.0.iter().sum::<Vec3>() / part.0.len() as f64;
        let v = part.0.iter().map(|p| rotate_upright(&(p - c), deg.to_radians()) + c + shift).collect();
        (v, part.1.clone())
    }

    fn detect(b: &Building) -> DuplicateSets {
        let s = b.summarize_all(ObbMode::Free).unwrap();
        detect_duplicates(b, &s, &DedupConfig::default())
    }

    #[test]
    fn translated_copy() {
        let w = wedge();
        let b = building(vec![w.clone(), moved(&w, 0.0, Vec3::new(5.0, 1.0, -2.0))]);
        let d = detect(&b);
        assert_eq!(d.classes, vec![vec![0, 1]]);
        let r = d.pairs[0].rotation_deg;
        assert!(r.min(360.0 - r) < 1e-6);
        assert!((d.pairs[0].translation - Vec3::new(5.0, 1.0, -2.0)).norm() < 1e-9);
    }

    #[test]
    fn rotated_copy() {
        let w = wedge();
        for deg in [90.0, 13.7, 271.2] {
            let b = building(vec![w.clone(), moved(&w, deg, Vec3::new(-3.0, 0.0, 4.0))]);
            let d = detect(&b);
            assert_eq!(d.classes, vec![vec![0, 1]], "{deg}");
            assert!((d.pairs[0].rotation_deg - deg).abs() < 1e-6, "{deg}: {}", d.pairs[0].rotation_deg);
        }
    }

    #[test]
    fn different_split_is_not_a_duplicate() {
        let a = quad_mesh(Vec3::zeros(), Vec3::x(), Vec3::y());
        let b = quad_mesh_flipped(Vec3::zeros(), Vec3::x(), Vec3::y());
        let d = detect(&building(vec![a.clone(), b]));
        assert_eq!(d.classes, vec![vec![0], vec![1]]);
        let c = quad_mesh(Vec3::new(3.0, 0.0, 0.0), Vec3::x(), Vec3::y());
        assert_eq!(detect(&building(vec![a, c])).classes, vec![vec![0, 1]]);
    }

    #[test]
    fn horizontal_square_splits_are_congruent() {
        // A quarter turn maps one diagonal onto the other.
        let a = quad_mesh(Vec3::zeros(), Vec3::z(), Vec3::x());
        let b = quad_mesh_flipped(Vec3::new(3.0, 0.0, 0.0), Vec3::z(), Vec3::x());
        let d = detect(&building(vec![a, b]));
        assert_eq!(d.classes, vec![vec![0, 1]]);
        let r = d.pairs[0].rotation_deg;
        assert!((r - 90.0).abs() < 1e-6 || (r - 270.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn mirror_and_perturbation_rejected() {
        let w = wedge();
        let mirrored = (w.0.iter().map(|p| Vec3::new(-p.x, p.y, p.z) + Vec3::new(6.0, 0.0, 0.0)).collect(), w.1.clone());
        let mut bumped = moved(&w, 40.0, Vec3::new(0.0, 0.0, 6.0));
        bumped.0[4].y += 1e-3;
        let d = detect(&building(vec![w, mirrored, bumped]));
        assert_eq!(d.classes.len(), 3);
    }

    #[test]
    fn classes_are_transitive() {
        let w = wedge();
        let b = building(vec![
            w.clone(),
            moved(&w, 120.0, Vec3::new(5.0, 0.0, 0.0)),
            quad_mesh(Vec3::new(0.0, 5.0, 0.0), Vec3::x(), Vec3::z()),
            moved(&w, 200.0, Vec3::new(10.0, 0.0, 0.0)),
        ]);
        let d = detect(&b);
        assert_eq!(d.classes, vec![vec![0, 1, 3], vec![2]]);
        assert_eq!(d.class_of(4), vec![0, 0, 1, 0]);
        assert!(d.are_duplicates(1, 3));
    }
}
