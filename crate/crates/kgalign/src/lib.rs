//! Scalable entity alignment between two knowledge graphs.
//!
//! The pipeline merges two KGs along their seed alignment pairs, partitions
//! the joint graph into balanced blocks, recalls centrality-selected landmark
//! entities into each block, trains a lightweight neighborhood-aggregation
//! encoder over the blocks as mini-batches, and infers alignment by
//! bidirectional top-k nearest-neighbor search over a fused embedding space.
//!
//! The stages are usable on their own (see the [`graph`], [`merge`],
//! [`partition`], [`landmark`], [`train`] and [`infer`] modules) or end to
//! end through [`pipeline::run_pipeline`]. A narrative guide with runnable
//! examples lives in the `book/` directory of the repository and is mirrored
//! in the [`guide`] module so the snippets stay compiled and tested.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod graph;
pub mod guide;
pub mod infer;
pub mod landmark;
pub mod loss;
pub mod mem;
pub mod merge;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod seed;
pub mod subgraph;
pub mod synth;
pub mod train;

mod error;

pub use error::{Error, Result};
pub use graph::{AlignmentSet, EntityId, KnowledgeGraph, RelationId, Triple};
pub use merge::MergedGraph;
pub use partition::Partition;
pub use subgraph::Subgraph;

/// All allocations made by binaries linking this crate are counted, so the
/// pipeline can report allocator high-water marks per stage.
#[global_allocator]
static ALLOCATOR: mem::TrackingAllocator = mem::TrackingAllocator;
