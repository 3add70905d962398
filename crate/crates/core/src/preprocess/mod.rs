//! Mesh clean-up and surface sampling: duplicate subgroups, interior
//! removal, point sampling and point ↔ triangle mapping.

pub mod align;
pub mod dedup;
pub mod interior;
pub mod mapping;
pub mod sampling;

pub use dedup::{detect_duplicates, DedupConfig, DuplicatePair, DuplicateSets};
pub use interior::{remove_interior, InteriorConfig};
pub use mapping::{build_point_triangle_map, PointTriangleMap};
pub use sampling::{sample_points, PointSet};
