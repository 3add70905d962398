//! Small geometric primitives shared by the spatial indices.

use crate::mesh::Vec3;

/// Triangles with area below this are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-14;

pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Right-hand-rule unit normal; zero for degenerate triangles.
pub fn triangle_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len > 0.0 && len.is_finite() {
        n / len
    } else {
        Vec3::zeros()
    }
}

pub fn triangle_centroid(a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    (a + b + c) / 3.0
}

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let denom = d1 - d3;
        let v = if denom != 0.0 { d1 / denom } else { 0.0 };
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let denom = d2 - d6;
        let w = if denom != 0.0 { d2 / denom } else { 0.0 };
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let denom = (d4 - d3) + (d5 - d6);
        let w = if denom != 0.0 { (d4 - d3) / denom } else { 0.0 };
        return b + (c - b) * w;
    }
    let denom = va + vb + vc;
    if denom == 0.0 {
        // Degenerate triangle: fall back to the closest of its three edges.
        let candidates = [
            closest_on_segment(p, a, b),
            closest_on_segment(p, b, c),
            closest_on_segment(p, c, a),
        ];
        return candidates
            .into_iter()
            .min_by(|x, y| (x - p).norm_squared().total_cmp(&(y - p).norm_squared()))
            .unwrap();
    }
    let v = vb / denom;
    let w = vc / denom;
    a + ab * v + ac * w
}

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_triangle_distance_sq(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    (closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]) - p).norm_squared()
}

/// Möller–Trumbore ray/triangle intersection. Returns the ray parameter of the hit.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < EPS * e1.norm() * e2.norm() * dir.norm() || det == 0.0 {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - tri[0];
    let u = tvec.dot(&pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv;
    Some(t)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        if self.is_empty() {
            Vec3::zeros()
        } else {
            self.max - self.min
        }
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    /// Squared distance from a point to the box (zero inside).
    pub fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    /// Squared distance between two boxes (zero when overlapping).
    pub fn box_distance_sq(&self, other: &Aabb) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let gap = (self.min[k] - other.max[k]).max(other.min[k] - self.max[k]).max(0.0);
            d += gap * gap;
        }
        d
    }

    /// Slab test; returns the entry parameter if the ray hits within `[0, t_max]`.
    pub fn ray_entry(&self, origin: &Vec3, inv_dir: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for k in 0..3 {
            let mut near = (self.min[k] - origin[k]) * inv_dir[k];
            let mut far = (self.max[k] - origin[k]) * inv_dir[k];
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            // NaN from 0 * inf means the origin lies on the slab plane; keep the interval.
            if near.is_nan() || far.is_nan() {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            t0 = t0.max(near);
            t1 = t1.min(far * (1.0 + 4.0 * f64::EPSILON));
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn closest_point_regions() {
        let tri = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        assert!((point_triangle_distance_sq(&v(0.2, 0.2, 1.0), &tri) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance_sq(&v(-1.0, -1.0, 0.0), &tri) - 2.0).abs() < 1e-15);
        assert!((point_triangle_distance_sq(&v(2.0, 0.0, 0.0), &tri) - 1.0).abs() < 1e-15);
        assert!((point_triangle_distance_sq(&v(1.0, 1.0, 0.0), &tri) - 0.5).abs() < 1e-15);
        assert!((point_triangle_distance_sq(&v(0.5, -1.0, 0.0), &tri) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn closest_point_matches_dense_search() {
        let tri = [v(0.1, -0.3, 0.2), v(1.3, 0.4, -0.2), v(-0.2, 0.9, 0.7)];
        for &p in &[v(0.3, 2.0, -1.0), v(-1.0, 0.0, 0.0), v(0.4, 0.3, 0.3), v(2.0, 2.0, 2.0)] {
            let fast = point_triangle_distance_sq(&p, &tri);
            let mut best = f64::INFINITY;
            let n = 400;
            for i in 0..=n {
                for j in 0..=(n - i) {
                    let (u, w) = (i as f64 / n as f64, j as f64 / n as f64);
                    let q = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[0]) * w;
                    best = best.min((q - p).norm_squared());
                }
            }
            assert!(fast <= best + 1e-12);
            assert!(best - fast < 1e-4);
        }
    }

    #[test]
    fn ray_hits_and_misses() {
        let tri = [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)];
        let t = ray_triangle(&v(0.2, 0.2, 1.0), &v(0.0, 0.0, -1.0), &tri).unwrap();
        assert!((t - 1.0).abs() < 1e-15);
        assert!(ray_triangle(&v(0.8, 0.8, 1.0), &v(0.0, 0.0, -1.0), &tri).is_none());
        assert!(ray_triangle(&v(0.2, 0.2, 1.0), &v(1.0, 0.0, 0.0), &tri).is_none());
    }

    #[test]
    fn aabb_ray_entry() {
        let b = Aabb { min: v(0.0, 0.0, 0.0), max: v(1.0, 1.0, 1.0) };
        let dir = v(1.0, 0.0, 0.0);
        let inv = v(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        assert_eq!(b.ray_entry(&v(-1.0, 0.5, 0.5), &inv, 10.0), Some(1.0));
        assert_eq!(b.ray_entry(&v(-1.0, 2.5, 0.5), &inv, 10.0), None);
        assert_eq!(b.ray_entry(&v(-1.0, 0.5, 0.5), &inv, 0.5), None);
    }
}
