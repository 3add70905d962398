//! Static k-d tree over 3-D points with per-node bounding boxes.

use super::geom::{point_triangle_distance_sq, Aabb};
use crate::mesh::Vec3;

const BUCKET: usize = 8;

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    start: usize,
    end: usize,
    children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            let n = points.len();
            build(&points, &mut order, &mut nodes, 0, n);
        }
        KdTree {
            points,
            order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Vec3 {
        &self.points[i]
    }

    /// Nearest point to `q` as `(index, squared distance)`; ties resolve to the lowest index.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        self.nearest_by(|b| b.distance_sq(q), |p| (p - q).norm_squared())
    }

    /// Nearest point to the triangle surface; ties resolve to the lowest index.
    pub fn nearest_to_triangle(&self, tri: &[Vec3; 3]) -> Option<(usize, f64)> {
        let tri_box = Aabb::from_points(tri.iter());
        self.nearest_by(
            |b| b.box_distance_sq(&tri_box),
            |p| point_triangle_distance_sq(p, tri),
        )
    }

    fn nearest_by(
        &self,
        lower_bound: impl Fn(&Aabb) -> f64,
        dist: impl Fn(&Vec3) -> f64,
    ) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![(0usize, lower_bound(&self.nodes[0].bounds))];
        while let Some((ni, lb)) = stack.pop() {
            if best.is_some_and(|(_, d)| lb > d) {
                continue;
            }
            let node = &self.nodes[ni];
            match node.children {
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let d = dist(&self.points[i]);
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d < bd || (d == bd && i < bi),
                        };
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
                Some((l, r)) => {
                    let dl = lower_bound(&self.nodes[l].bounds);
                    let dr = lower_bound(&self.nodes[r].bounds);
                    if dl <= dr {
                        stack.push((r, dr));
                        stack.push((l, dl));
                    } else {
                        stack.push((l, dl));
                        stack.push((r, dr));
                    }
                }
            }
        }
        best
    }

    /// Indices of all points within `radius` of `q` (inclusive), in ascending index order.
    pub fn within_radius(&self, q: &Vec3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.distance_sq(q) > r2 {
                continue;
            }
            match node.children {
                None => out.extend(
                    self.order[node.start..node.end]
                        .iter()
                        .copied()
                        .filter(|&i| (self.points[i] - q).norm_squared() <= r2),
                ),
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn build(points: &[Vec3], order: &mut [usize], nodes: &mut Vec<Node>, start: usize, end: usize) -> usize {
    let bounds = Aabb::from_points(order[start..end].iter().map(|&i| &points[i]));
    let index = nodes.len();
    nodes.push(Node {
        bounds,
        start,
        end,
        children: None,
    });
    if end - start <= BUCKET {
        return index;
    }
    let ext = bounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = start + (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let l = build(points, order, nodes, start, mid);
    let r = build(points, order, nodes, mid, end);
    nodes[index].children = Some((l, r));
    index
}
