//! Primitive meshes used by the fixture catalog and tests.

use crate::mesh::{Building, PartLabel, Subgroup, Vec3};

/// Axis-aligned box with corner `min` and edge lengths `size`; 8 vertices, 12
/// outward-facing triangles.
pub fn cube_mesh(min: Vec3, size: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let verts = (0..8)
        .map(|i| {
            min + Vec3::new(
                size.x * (i & 1) as f64,
                size.y * ((i >> 1) & 1) as f64,
                size.z * ((i >> 2) & 1) as f64,
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let tris = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    (verts, tris)
}

/// Planar parallelogram `origin + s·u + t·v`, `s, t ∈ [0, 1]`, normal along `u × v`.
pub fn quad_mesh(origin: Vec3, u: Vec3, v: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let verts = vec![origin, origin + u, origin + u + v, origin + v];
    (verts, vec![[0, 1, 2], [0, 2, 3]])
}

/// Same square as [`quad_mesh`] split along the other diagonal.
pub fn quad_mesh_flipped(origin: Vec3, u: Vec3, v: Vec3) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let verts = vec![origin, origin + u, origin + u + v, origin + v];
    (verts, vec![[0, 1, 3], [1, 2, 3]])
}

/// Mesh as vertex positions and triangles.
pub type Part = (Vec<Vec3>, Vec<[usize; 3]>);

/// Applies `f` to every vertex of a part.
pub fn map_part(part: Part, f: impl Fn(&Vec3) -> Vec3) -> Part {
    (part.0.iter().map(f).collect(), part.1)
}

/// Collects parts into a building, one subgroup per part.
#[derive(Debug, Default)]
pub struct Assembler {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    subgroups: Vec<Subgroup>,
    labels: Vec<Option<PartLabel>>,
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a subgroup and returns its index.
    pub fn add(&mut self, name: impl Into<String>, part: Part, label: Option<PartLabel>) -> usize {
        let base = self.vertices.len();
        let start = self.triangles.len();
        self.vertices.extend(part.0);
        self.triangles
            .extend(part.1.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.subgroups.push(Subgroup {
            name: name.into(),
            triangles: (start..self.triangles.len()).collect(),
        });
        self.labels.push(label);
        self.subgroups.len() - 1
    }

    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }

    pub fn finish(self) -> Building {
        Building::new(
            self.vertices,
            self.triangles,
            None,
            self.subgroups,
            Default::default(),
            self.labels,
        )
        .expect("assembled parts are valid")
    }
}
