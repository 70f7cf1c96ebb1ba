//! Graph and stats file formats.
//!
//! Graphs are stored as strict UTF-8 JSON with a fixed schema; unknown
//! fields are rejected by name and parse errors carry line/column
//! positions. Stats are one JSON object per line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VesselGraphError};
use crate::features::{AnnotatedEdge, EdgeFeatures, VesselGraph};
use crate::graph::{Node, NodeKind};

use super::IterationStats;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    version: u32,
    spacing: [f64; 3],
    nodes: Vec<NodeRow>,
    edges: Vec<EdgeRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRow {
    id: u32,
    pos: [f64; 3],
    kind: String,
    voxel_count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRow {
    id: u32,
    a: u32,
    b: u32,
    centerline: Vec<[f64; 3]>,
    features: FeatureRow,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureRow {
    length: f64,
    distance: f64,
    straightness: f64,
    volume: f64,
    avg_cross_section: f64,
    #[serde(rename = "minRadiusMean")]
    min_radius_mean: f64,
    #[serde(rename = "minRadiusStd")]
    min_radius_std: f64,
    #[serde(rename = "maxRadiusMean")]
    max_radius_mean: f64,
    #[serde(rename = "maxRadiusStd")]
    max_radius_std: f64,
    #[serde(rename = "avgRadiusMean")]
    avg_radius_mean: f64,
    #[serde(rename = "avgRadiusStd")]
    avg_radius_std: f64,
    #[serde(rename = "roundnessMean")]
    roundness_mean: f64,
    #[serde(rename = "roundnessStd")]
    roundness_std: f64,
    bulge_size: Option<f64>,
}

fn kind_token(kind: NodeKind) -> &'static str {
    match kind {
        NodeKind::End => "end",
        NodeKind::Branch => "branch",
        NodeKind::Loop => "loop",
    }
}

fn kind_from_token(s: &str) -> Result<NodeKind> {
    match s {
        "end" => Ok(NodeKind::End),
        "branch" => Ok(NodeKind::Branch),
        "loop" => Ok(NodeKind::Loop),
        other => Err(VesselGraphError::GraphParse(format!(
            "unknown node kind {other:?}"
        ))),
    }
}

fn to_file(g: &VesselGraph) -> GraphFile {
    GraphFile {
        version: 1,
        spacing: g.spacing,
        nodes: g
            .nodes
            .iter()
            .map(|n| NodeRow {
                id: n.id,
                pos: n.position,
                kind: kind_token(n.kind).to_string(),
                voxel_count: n.voxel_count,
            })
            .collect(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeRow {
                id: e.id,
                a: e.node_a,
                b: e.node_b,
                centerline: e.centerline.clone(),
                features: FeatureRow {
                    length: e.features.length,
                    distance: e.features.distance,
                    straightness: e.features.straightness,
                    volume: e.features.volume,
                    avg_cross_section: e.features.avg_cross_section,
                    min_radius_mean: e.features.min_radius_mean,
                    min_radius_std: e.features.min_radius_std,
                    max_radius_mean: e.features.max_radius_mean,
                    max_radius_std: e.features.max_radius_std,
                    avg_radius_mean: e.features.avg_radius_mean,
                    avg_radius_std: e.features.avg_radius_std,
                    roundness_mean: e.features.roundness_mean,
                    roundness_std: e.features.roundness_std,
                    bulge_size: e.features.bulge_size,
                },
            })
            .collect(),
    }
}

pub fn serialize_graph(g: &VesselGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| VesselGraphError::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &to_file(g))
        .map_err(|e| VesselGraphError::GraphParse(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| VesselGraphError::io(path, e))?;
    w.flush().map_err(|e| VesselGraphError::io(path, e))
}

pub fn deserialize_graph(path: &Path) -> Result<VesselGraph> {
    let file = File::open(path).map_err(|e| VesselGraphError::io(path, e))?;
    let reader = BufReader::new(file);
    let parsed: GraphFile = serde_json::from_reader(reader).map_err(|e| {
        VesselGraphError::GraphParse(format!(
            "{} at line {} column {}",
            e,
            e.line(),
            e.column()
        ))
    })?;
    if parsed.version != 1 {
        return Err(VesselGraphError::GraphParse(format!(
            "unsupported graph file version {}",
            parsed.version
        )));
    }
    let mut nodes = Vec::with_capacity(parsed.nodes.len());
    for n in parsed.nodes {
        nodes.push(Node {
            id: n.id,
            kind: kind_from_token(&n.kind)?,
            voxels: Vec::new(),
            voxel_count: n.voxel_count,
            position: n.pos,
        });
    }
    let edges = parsed
        .edges
        .into_iter()
        .map(|e| AnnotatedEdge {
            id: e.id,
            node_a: e.a,
            node_b: e.b,
            centerline: e.centerline,
            attrs: Vec::new(),
            features: EdgeFeatures {
                length: e.features.length,
                distance: e.features.distance,
                straightness: e.features.straightness,
                volume: e.features.volume,
                avg_cross_section: e.features.avg_cross_section,
                min_radius_mean: e.features.min_radius_mean,
                min_radius_std: e.features.min_radius_std,
                max_radius_mean: e.features.max_radius_mean,
                max_radius_std: e.features.max_radius_std,
                avg_radius_mean: e.features.avg_radius_mean,
                avg_radius_std: e.features.avg_radius_std,
                roundness_mean: e.features.roundness_mean,
                roundness_std: e.features.roundness_std,
                bulge_size: e.features.bulge_size,
                ..Default::default()
            },
        })
        .collect();
    Ok(VesselGraph {
        dims: [0; 3],
        spacing: parsed.spacing,
        nodes,
        edges,
    })
}

#[derive(Serialize)]
struct StatsRow {
    iteration: u32,
    node_count: usize,
    edge_count: usize,
    times: StatsTimes,
    peak_tracked_bytes: usize,
}

#[derive(Serialize)]
struct StatsTimes {
    skeletonization: f64,
    extraction: f64,
    assignment: f64,
    features: f64,
    refinement: f64,
}

/// One JSON object per iteration.
pub fn write_stats_jsonl(stats: &[IterationStats], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| VesselGraphError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in stats {
        let row = StatsRow {
            iteration: s.iteration,
            node_count: s.node_count,
            edge_count: s.edge_count,
            times: StatsTimes {
                skeletonization: s.skeletonization_secs,
                extraction: s.extraction_secs,
                assignment: s.assignment_secs,
                features: s.features_secs,
                refinement: s.refinement_secs,
            },
            peak_tracked_bytes: s.peak_tracked_bytes,
        };
        serde_json::to_writer(&mut w, &row)
            .map_err(|e| VesselGraphError::GraphParse(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| VesselGraphError::io(path, e))?;
    }
    w.flush().map_err(|e| VesselGraphError::io(path, e))
}
