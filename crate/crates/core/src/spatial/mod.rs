//! Spatial indices and geometric predicates.

pub mod bvh;
pub mod geom;
pub mod kdtree;

pub use bvh::{Bvh, NearestTriangle};
pub use geom::Aabb;
pub use kdtree::KdTree;
