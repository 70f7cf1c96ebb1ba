//! Graph summary comparison: per-feature distribution summaries and their
//! relative differences between two graphs.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::features::VesselGraph;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub features: BTreeMap<String, MeanStd>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub a: GraphSummary,
    pub b: GraphSummary,
    /// Relative difference of feature means, per feature.
    pub relative_differences: BTreeMap<String, f64>,
    /// Set when node or edge counts differ.
    pub structural_mismatch: bool,
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

pub fn summarize_graph(g: &VesselGraph) -> GraphSummary {
    let mut features: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in &g.edges {
        let f = &e.features;
        let pairs: [(&str, f64); 13] = [
            ("length", f.length),
            ("distance", f.distance),
            ("straightness", f.straightness),
            ("volume", f.volume),
            ("avg_cross_section", f.avg_cross_section),
            ("minRadiusMean", f.min_radius_mean),
            ("minRadiusStd", f.min_radius_std),
            ("maxRadiusMean", f.max_radius_mean),
            ("maxRadiusStd", f.max_radius_std),
            ("avgRadiusMean", f.avg_radius_mean),
            ("avgRadiusStd", f.avg_radius_std),
            ("roundnessMean", f.roundness_mean),
            ("roundnessStd", f.roundness_std),
        ];
        for (k, v) in pairs {
            features.entry(k.to_string()).or_default().push(v);
        }
        if let Some(b) = f.bulge_size {
            features.entry("bulge_size".to_string()).or_default().push(b);
        }
    }
    GraphSummary {
        node_count: g.nodes.len(),
        edge_count: g.edges.len(),
        features: features
            .into_iter()
            .map(|(k, v)| (k, mean_std(&v)))
            .collect(),
    }
}

fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn compare_graph_summaries(ga: &VesselGraph, gb: &VesselGraph) -> ComparisonReport {
    let a = summarize_graph(ga);
    let b = summarize_graph(gb);
    let mut relative_differences = BTreeMap::new();
    for key in a.features.keys().chain(b.features.keys()) {
        let ma = a.features.get(key).map_or(0.0, |m| m.mean);
        let mb = b.features.get(key).map_or(0.0, |m| m.mean);
        relative_differences.insert(key.clone(), relative_difference(ma, mb));
    }
    let structural_mismatch = a.node_count != b.node_count || a.edge_count != b.edge_count;
    ComparisonReport {
        a,
        b,
        relative_differences,
        structural_mismatch,
    }
}
