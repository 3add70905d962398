//! Synthetic buildings for tests, demos and experiments.

pub mod catalog;
pub mod shapes;

pub use catalog::{catalog_corpus, generate, support_ablation_corpus, FixtureKind};
