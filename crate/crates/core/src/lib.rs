//! Knowledge-graph informed re-ranking of recommendation lists.
//!
//! The item catalog and every user's history are modeled as knowledge graphs.
//! Each recommendation candidate is scored by how it changes a network metric
//! of the user's profile subgraph, and the list is re-ordered by that score
//! to surface less expectable items.
//!
//! Modules, bottom-up:
//! - [`graph`]: catalog multigraph, profile subgraphs, neighborhood extension
//! - [`netmetrics`]: scalar and HHI-collapsed distributional network metrics
//! - [`rerank`]: candidate evaluation and re-ordering
//! - [`recsys`]: base recommenders and the run-file adapter
//! - [`eval`]: ILD, unexpectedness and nDCG
//! - [`ingest`]: dataset loaders, sampling, splits
//! - [`synthetic`]: seeded two-cluster music catalog for experiments

pub mod eval;
pub mod graph;
pub mod ingest;
pub mod netmetrics;
pub mod recsys;
pub mod rerank;
pub mod synthetic;

pub use graph::{CatalogGraph, EntityId, EntityKind, NeighborhoodMode, ProfileSubgraph};
pub use netmetrics::{MetricKind, MetricValue};
pub use rerank::{RankedItem, RecommendationList, RerankConfig, SortOrder};
