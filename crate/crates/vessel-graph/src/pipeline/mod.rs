//! Iterative extraction-refinement pipeline.
//!
//! Each iteration re-skeletonizes the original foreground, extracts the
//! proto graph, assigns voxels to branches, annotates features and refines
//! the graph. From the second iteration on, the voxels of the refined
//! graph's degree-1 nodes (plus loop anchors) are pinned as fixed
//! foreground and line-end preservation is switched off, so spurious tips
//! vanish while confirmed endpoints persist. Iteration stops when two
//! consecutive iterations produce the same edge count, which never
//! increases.

mod preprocess;
mod serialize;

pub use preprocess::{fill_cavities, median_filter};
pub use serialize::{deserialize_graph, serialize_graph, write_stats_jsonl};

use std::path::PathBuf;
use std::time::Instant;

use crate::assign::assign_branches;
use crate::error::{Result, VesselGraphError};
use crate::features::{annotate_graph, VesselGraph};
use crate::graph::{extract_proto_graph, smooth_centerline, NodeKind};
use crate::memory::StorageContext;
use crate::refine::refine;
use crate::thinning::{skeletonize, ThinningConfig};
use crate::volume::BinaryVolume;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// The single dimensionless pruning parameter.
    pub bulge_threshold: f64,
    /// Optional iteration cap; at least 1 when present.
    pub max_iterations: Option<u32>,
    pub memory_budget: usize,
    pub scratch_dir: PathBuf,
    pub smoothing_enabled: bool,
}

impl PipelineConfig {
    pub fn new(bulge_threshold: f64, scratch_dir: impl Into<PathBuf>) -> PipelineConfig {
        PipelineConfig {
            bulge_threshold,
            max_iterations: None,
            memory_budget: StorageContext::DEFAULT_BUDGET,
            scratch_dir: scratch_dir.into(),
            smoothing_enabled: true,
        }
    }

    pub fn storage_context(&self) -> StorageContext {
        StorageContext::new(&self.scratch_dir, self.memory_budget)
    }

    fn validate(&self) -> Result<()> {
        if self.bulge_threshold < 0.0 || !self.bulge_threshold.is_finite() {
            return Err(VesselGraphError::InvalidInput(
                "bulge threshold must be a nonnegative real".into(),
            ));
        }
        if self.max_iterations == Some(0) {
            return Err(VesselGraphError::InvalidInput(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration counters and stage timings.
#[derive(Debug, Clone)]
pub struct IterationStats {
    pub iteration: u32,
    /// Refined graph counts after this iteration.
    pub node_count: usize,
    pub edge_count: usize,
    /// Pre-refinement proto graph counts (not serialized).
    pub raw_node_count: usize,
    pub raw_edge_count: usize,
    pub skeletonization_secs: f64,
    pub extraction_secs: f64,
    pub assignment_secs: f64,
    pub features_secs: f64,
    pub refinement_secs: f64,
    pub peak_tracked_bytes: usize,
}

/// Run the extraction-refinement cycle to its fixed point (or the
/// configured iteration cap) and return the final annotated graph with
/// per-iteration stats.
pub fn run_pipeline(
    fg: &BinaryVolume,
    cfg: &PipelineConfig,
    ctx: &StorageContext,
) -> Result<(VesselGraph, Vec<IterationStats>)> {
    cfg.validate()?;
    let mut fixed: Vec<u64> = Vec::new();
    let mut prev_edges: Option<usize> = None;
    let mut all_stats = Vec::new();
    let mut iteration = 1u32;
    loop {
        let t0 = Instant::now();
        let mut skel = fg.duplicate(ctx)?;
        let tcfg = if iteration == 1 {
            ThinningConfig::first_pass()
        } else {
            ThinningConfig::with_fixed(fixed.clone())
        };
        skeletonize(&mut skel, &tcfg, ctx)?;
        let t_skel = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut proto = extract_proto_graph(&skel, ctx)?;
        drop(skel);
        if cfg.smoothing_enabled {
            for e in proto.edges.iter_mut() {
                e.centerline = smooth_centerline(&e.centerline);
            }
        }
        let t_extract = t1.elapsed().as_secs_f64();
        let raw_node_count = proto.nodes.len();
        let raw_edge_count = proto.edges.len();

        let (annotated, t_assign, t_features) = if proto.total_centerline_points() == 0 {
            // no edges to assign voxels to; carry the bare nodes forward
            (
                VesselGraph {
                    dims: proto.dims,
                    spacing: proto.spacing,
                    nodes: proto.nodes.clone(),
                    edges: Vec::new(),
                },
                0.0,
                0.0,
            )
        } else {
            let t2 = Instant::now();
            let (ids, _regions) = assign_branches(fg, &proto, ctx)?;
            let t_assign = t2.elapsed().as_secs_f64();
            let t3 = Instant::now();
            let annotated = annotate_graph(fg, &ids, &proto, ctx)?;
            (annotated, t_assign, t3.elapsed().as_secs_f64())
        };

        let t4 = Instant::now();
        let refined = refine(annotated, cfg.bulge_threshold);
        let t_refine = t4.elapsed().as_secs_f64();

        all_stats.push(IterationStats {
            iteration,
            node_count: refined.nodes.len(),
            edge_count: refined.edges.len(),
            raw_node_count,
            raw_edge_count,
            skeletonization_secs: t_skel,
            extraction_secs: t_extract,
            assignment_secs: t_assign,
            features_secs: t_features,
            refinement_secs: t_refine,
            peak_tracked_bytes: ctx.tracker().peak_bytes(),
        });

        let edge_count = refined.edges.len();
        let at_cap = cfg.max_iterations == Some(iteration);
        let empty = refined.nodes.is_empty() && refined.edges.is_empty();
        if prev_edges == Some(edge_count) || at_cap || empty {
            return Ok((refined, all_stats));
        }
        prev_edges = Some(edge_count);
        fixed = fixed_voxels_of(&refined);
        iteration += 1;
    }
}

/// Voxels pinned for the next iteration: the full voxel sets of degree-1
/// nodes plus the anchor voxel of loop nodes, so pure loops survive
/// re-thinning at a stable position.
fn fixed_voxels_of(g: &VesselGraph) -> Vec<u64> {
    let degrees = g.degrees();
    let mut fixed = Vec::new();
    for n in &g.nodes {
        if degrees[&n.id] == 1 || n.kind == NodeKind::Loop {
            fixed.extend_from_slice(&n.voxels);
        }
    }
    fixed.sort_unstable();
    fixed.dedup();
    fixed
}
