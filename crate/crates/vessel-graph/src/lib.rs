//! Out-of-core extraction of annotated centerline graphs from binary
//! segmentations of vessel networks.
//!
//! The pipeline reduces the foreground to a voxel skeleton by topological
//! thinning, extracts nodes, edges and centerlines in a streaming pass,
//! assigns every foreground voxel to an edge, computes per-edge geometric
//! and morphological features, and prunes spurious bulges using a single
//! dimensionless threshold. Extraction and refinement are iterated to a
//! fixed point so that centerlines and features match the pruned topology.
//! All volume data lives on disk in 32³ blocks and is paged through capped
//! caches, so main memory use follows a configured budget instead of the
//! volume size.

pub mod assign;
pub mod error;
pub mod labeling;
pub mod features;
pub mod geometry;
pub mod graph;
pub mod index;
pub mod interval;
pub mod memory;
pub mod pipeline;
pub mod refine;
pub mod synth;
pub mod thinning;
pub mod volume;

pub use error::{Result, VesselGraphError};
pub use memory::{MemoryTracker, StorageContext};
