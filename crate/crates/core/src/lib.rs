//! Exterior part labeling for component-structured building meshes.
//!
//! A building mesh is partitioned into subgroups (the pre-existing face groups
//! of the modelling tool). This crate turns such a mesh into a relation graph
//! over its subgroups and labels every subgroup with a message-passing network:
//!
//! - [`mesh`]: data model, text format loader/saver, per-subgroup summaries (area,
//!   barycenter, oriented bounding box).
//! - [`preprocess`]: duplicate subgroup detection, interior removal, Poisson-disk
//!   point sampling and the point/triangle correspondence.
//! - [`graph`]: node and edge raw features (proximity, support, similarity,
//!   containment) and graph assembly.
//! - [`gnn`]: the network, weighted loss, exact backpropagation and Adam training.
//! - [`baselines`]: point-to-mesh pooling transfer and the graph-cuts refiner.
//! - [`metrics`]: area-weighted part IoU, shape IoU and accuracy.
//! - [`pipeline`] and [`fixtures`]: orchestration, caching and synthetic buildings.

pub mod baselines;
pub mod error;
pub mod fixtures;
pub mod gnn;
pub mod graph;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod spatial;

mod binio;

pub use error::{Error, Result};
pub use mesh::{Building, Obb, ObbMode, PartLabel, Subgroup, SubgroupSummary, Vec3};

/// Number of part labels.
pub const NUM_LABELS: usize = 31;
