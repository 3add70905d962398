//! Bounding volume hierarchy over triangles.
//!
//! Used for the interior-visibility ray casts and for exact point-to-surface
//! distance queries. Each primitive carries its global triangle index (`id`)
//! and an arbitrary `tag` (the owning subgroup) so callers can filter hits.

use super::geom::{point_triangle_distance_sq, ray_triangle, Aabb};
use crate::mesh::Vec3;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Prim {
    tri: [Vec3; 3],
    id: usize,
    tag: usize,
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // Leaves own prims[start..start + count]; inner nodes have count == 0.
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.count > 0
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    prims: Vec<Prim>,
}

/// Result of a nearest-triangle query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestTriangle {
    pub id: usize,
    pub tag: usize,
    pub distance_sq: f64,
}

impl Bvh {
    /// Builds a hierarchy from `(triangle, id, tag)` triples.
    pub fn new(items: impl IntoIterator<Item = ([Vec3; 3], usize, usize)>) -> Self {
        let mut prims: Vec<Prim> = items
            .into_iter()
            .map(|(tri, id, tag)| Prim { tri, id, tag })
            .collect();
        let mut nodes = Vec::with_capacity(2 * prims.len() / LEAF_SIZE + 1);
        if !prims.is_empty() {
            let n = prims.len();
            build(&mut nodes, &mut prims, 0, n);
        }
        Bvh { nodes, prims }
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.nodes.first().map_or_else(Aabb::empty, |n| n.bounds)
    }

    /// True if the segment `origin + t * dir`, `t in (t_min, t_max)`, hits a
    /// primitive whose tag passes `accept`.
    pub fn any_hit(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
        accept: impl Fn(usize) -> bool,
    ) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.ray_entry(origin, &inv, t_max).is_none() {
                continue;
            }
            if node.is_leaf() {
                for prim in &self.prims[node.start..node.start + node.count] {
                    if !accept(prim.tag) {
                        continue;
                    }
                    if let Some(t) = ray_triangle(origin, dir, &prim.tri) {
                        if t > t_min && t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        false
    }

    /// Nearest primitive to `p`; ties resolve to the lowest `id`.
    pub fn nearest(&self, p: &Vec3) -> Option<NearestTriangle> {
        self.nearest_filtered(p, |_| true)
    }

    pub fn nearest_filtered(
        &self,
        p: &Vec3,
        accept: impl Fn(usize) -> bool,
    ) -> Option<NearestTriangle> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<NearestTriangle> = None;
        let mut stack = vec![(0usize, self.nodes[0].bounds.distance_sq(p))];
        while let Some((ni, lower)) = stack.pop() {
            if let Some(b) = best {
                if lower > b.distance_sq {
                    continue;
                }
            }
            let node = &self.nodes[ni];
            if node.is_leaf() {
                for prim in &self.prims[node.start..node.start + node.count] {
                    if !accept(prim.tag) {
                        continue;
                    }
                    let d = point_triangle_distance_sq(p, &prim.tri);
                    let better = match best {
                        None => true,
                        Some(b) => d < b.distance_sq || (d == b.distance_sq && prim.id < b.id),
                    };
                    if better {
                        best = Some(NearestTriangle {
                            id: prim.id,
                            tag: prim.tag,
                            distance_sq: d,
                        });
                    }
                }
            } else {
                let dl = self.nodes[node.left].bounds.distance_sq(p);
                let dr = self.nodes[node.right].bounds.distance_sq(p);
                // Push the farther child first so the nearer one is explored first.
                if dl <= dr {
                    stack.push((node.right, dr));
                    stack.push((node.left, dl));
                } else {
                    stack.push((node.left, dl));
                    stack.push((node.right, dr));
                }
            }
        }
        best
    }
}

fn build(nodes: &mut Vec<Node>, prims: &mut [Prim], start: usize, end: usize) -> usize {
    let slice = &mut prims[start..end];
    let mut bounds = Aabb::empty();
    let mut centroid_bounds = Aabb::empty();
    for p in slice.iter() {
        for v in &p.tri {
            bounds.grow(v);
        }
        centroid_bounds.grow(&((p.tri[0] + p.tri[1] + p.tri[2]) / 3.0));
    }
    let index = nodes.len();
    nodes.push(Node {
        bounds,
        start,
        count: 0,
        left: 0,
        right: 0,
    });
    if slice.len() <= LEAF_SIZE {
        nodes[index].count = slice.len();
        return index;
    }
    let ext = centroid_bounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    slice.sort_by(|a, b| {
        let ca = a.tri[0][axis] + a.tri[1][axis] + a.tri[2][axis];
        let cb = b.tri[0][axis] + b.tri[1][axis] + b.tri[2][axis];
        ca.total_cmp(&cb).then(a.id.cmp(&b.id))
    });
    let mid = start + slice.len() / 2;
    let left = build(nodes, prims, start, mid);
    let right = build(nodes, prims, mid, end);
    nodes[index].left = left;
    nodes[index].right = right;
    index
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tris(n: usize, seed: u64) -> Vec<[Vec3; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = Vec3::new(rng.gen(), rng.gen(), rng.gen());
                let mut t = [c; 3];
                for v in t.iter_mut() {
                    *v += Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 0.1;
                }
                t
            })
            .collect()
    }

    #[test]
    fn nearest_matches_brute_force() {
        let tris = random_tris(300, 3);
        let bvh = Bvh::new(tris.iter().enumerate().map(|(i, t)| (*t, i, 0)));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let p = Vec3::new(rng.gen(), rng.gen(), rng.gen()) * 1.4 - Vec3::repeat(0.2);
            let got = bvh.nearest(&p).unwrap();
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, t) in tris.iter().enumerate() {
                let d = point_triangle_distance_sq(&p, t);
                if d < best.1 {
                    best = (i, d);
                }
            }
            assert_eq!(got.id, best.0);
            assert_eq!(got.distance_sq, best.1);
        }
    }

    #[test]
    fn any_hit_matches_brute_force() {
        let tris = random_tris(200, 5);
        let bvh = Bvh::new(tris.iter().enumerate().map(|(i, t)| (*t, i, i % 3)));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let o = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let d = Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let got = bvh.any_hit(&o, &d, 0.0, 2.0, |tag| tag != 1);
            let want = tris.iter().enumerate().any(|(i, t)| {
                i % 3 != 1 && ray_triangle(&o, &d, t).is_some_and(|s| s > 0.0 && s < 2.0)
            });
            assert_eq!(got, want);
        }
    }

    #[test]
    fn empty_hierarchy() {
        let bvh = Bvh::new(std::iter::empty());
        assert!(bvh.nearest(&Vec3::zeros()).is_none());
        assert!(!bvh.any_hit(&Vec3::zeros(), &Vec3::x(), 0.0, 1.0, |_| true));
    }
}
