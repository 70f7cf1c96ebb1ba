//! Per-point attribute accumulation and per-edge feature computation.
//!
//! Every labeled foreground voxel contributes its physical volume to the
//! nearest centerline point(s) of its edge; surface voxels additionally
//! contribute their surface distance to the single closest point. Per-edge
//! features aggregate these attributes: geometric features (length,
//! distance, straightness, volume, average cross-section), the eight
//! radius statistics (mean and population standard deviation of the
//! minimum / maximum / average surface distance and roundness over points
//! with surface samples), and the dimensionless bulge size used for
//! pruning.

use log::warn;

use crate::error::{Result, VesselGraphError};
use crate::geometry::{dist, polyline_length, Point3};
use crate::graph::{Node, NodeId, ProtoVesselGraph};
use crate::index::{build_point_index, PointRecord, StaticPointIndex};
use crate::memory::StorageContext;
use crate::volume::{BinaryVolume, LabelVolume, UNASSIGNED};

#[derive(Debug, Clone)]
pub struct PointAttributes {
    pub position: Point3,
    /// Physical volume assigned to this point.
    pub assigned_volume: f64,
    pub min_dist: f64,
    pub max_dist: f64,
    pub avg_dist: f64,
    pub surface_voxel_count: u64,
    /// Point lies within a branching region.
    pub is_inner: bool,
}

impl PointAttributes {
    fn new(position: Point3) -> PointAttributes {
        PointAttributes {
            position,
            assigned_volume: 0.0,
            min_dist: f64::INFINITY,
            max_dist: 0.0,
            avg_dist: 0.0,
            surface_voxel_count: 0,
            is_inner: false,
        }
    }

    /// Surface distances are defined only when at least one surface voxel
    /// was assigned to this point.
    pub fn has_surface(&self) -> bool {
        self.surface_voxel_count > 0
    }

    /// min/max surface distance ratio; a degenerate all-zero point counts
    /// as perfectly round.
    pub fn roundness(&self) -> Option<f64> {
        if !self.has_surface() {
            return None;
        }
        if self.max_dist > 0.0 {
            Some(self.min_dist / self.max_dist)
        } else {
            Some(1.0)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeFeatures {
    pub length: f64,
    pub distance: f64,
    pub straightness: f64,
    pub volume: f64,
    pub avg_cross_section: f64,
    pub min_radius_mean: f64,
    pub min_radius_std: f64,
    pub max_radius_mean: f64,
    pub max_radius_std: f64,
    pub avg_radius_mean: f64,
    pub avg_radius_std: f64,
    pub roundness_mean: f64,
    pub roundness_std: f64,
    /// Defined only for bulging edges (leaf to branch) with usable radius
    /// and tip data.
    pub bulge_size: Option<f64>,
    pub inner_length_a: f64,
    pub inner_length_b: f64,
    pub tip_radius_a: Option<f64>,
    pub tip_radius_b: Option<f64>,
    /// Set when straightness was reported as 1.0 for a zero-length edge.
    pub degenerate_straightness: bool,
}

/// Fully annotated graph: proto topology plus per-point attributes and
/// per-edge features.
#[derive(Debug, Clone, Default)]
pub struct VesselGraph {
    pub dims: [u32; 3],
    pub spacing: [f64; 3],
    pub nodes: Vec<Node>,
    pub edges: Vec<AnnotatedEdge>,
}

#[derive(Debug, Clone)]
pub struct AnnotatedEdge {
    pub id: u32,
    pub node_a: NodeId,
    pub node_b: NodeId,
    pub centerline: Vec<Point3>,
    pub attrs: Vec<PointAttributes>,
    pub features: EdgeFeatures,
}

impl AnnotatedEdge {
    pub fn is_self_loop(&self) -> bool {
        self.node_a == self.node_b
    }
}

impl VesselGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        match self.nodes.binary_search_by_key(&id, |n| n.id) {
            Ok(i) => &self.nodes[i],
            Err(_) => panic!("node {id} not in graph"),
        }
    }

    pub fn degrees(&self) -> std::collections::BTreeMap<NodeId, usize> {
        let mut d: std::collections::BTreeMap<NodeId, usize> =
            self.nodes.iter().map(|n| (n.id, 0)).collect();
        for e in &self.edges {
            *d.get_mut(&e.node_a).unwrap() += 1;
            *d.get_mut(&e.node_b).unwrap() += 1;
        }
        d
    }
}

/// Immutable per-edge spatial indexes over centerline points.
pub struct EdgePointIndexes {
    per_edge: Vec<StaticPointIndex>,
}

impl EdgePointIndexes {
    pub fn build(graph: &ProtoVesselGraph, ctx: &StorageContext) -> Result<EdgePointIndexes> {
        let mut per_edge = Vec::with_capacity(graph.edges.len());
        for e in &graph.edges {
            let records: Vec<PointRecord> = e
                .centerline
                .iter()
                .enumerate()
                .map(|(i, &p)| PointRecord {
                    position: p,
                    payload: i as u64,
                })
                .collect();
            per_edge.push(build_point_index(&records, ctx)?);
        }
        Ok(EdgePointIndexes { per_edge })
    }
}

/// True when the voxel is foreground with at least one background
/// 6-neighbor (out-of-range counts as background).
fn is_surface_voxel(fg: &BinaryVolume, p: [i64; 3]) -> bool {
    if !fg.get(p).is_foreground() {
        return false;
    }
    [
        [p[0] - 1, p[1], p[2]],
        [p[0] + 1, p[1], p[2]],
        [p[0], p[1] - 1, p[2]],
        [p[0], p[1] + 1, p[2]],
        [p[0], p[1], p[2] - 1],
        [p[0], p[1], p[2] + 1],
    ]
    .iter()
    .any(|&q| !fg.get(q).is_foreground())
}

fn edge_of_voxel(
    ids: &LabelVolume,
    p: [i64; 3],
    edge_count: usize,
) -> Result<Option<u32>> {
    let label = ids.get(p);
    if label == UNASSIGNED {
        return Ok(None);
    }
    if label as usize >= edge_count {
        return Err(VesselGraphError::Structural(format!(
            "voxel {p:?} labeled with nonexistent edge {label}"
        )));
    }
    Ok(Some(label))
}

/// Distribute voxel volumes and surface distances onto centerline points.
///
/// Each labeled foreground voxel queries its edge's point index; the voxel
/// volume is split equally among all exactly-tied nearest points, and a
/// surface voxel's distance updates min/max/avg at the single closest
/// point (ties to the smallest point index).
pub fn accumulate_point_attributes(
    fg: &BinaryVolume,
    ids: &LabelVolume,
    graph: &ProtoVesselGraph,
    indexes: &EdgePointIndexes,
) -> Result<Vec<Vec<PointAttributes>>> {
    let header = fg.header().clone();
    let voxel_volume = header.voxel_volume();
    let mut attrs: Vec<Vec<PointAttributes>> = graph
        .edges
        .iter()
        .map(|e| e.centerline.iter().map(|&p| PointAttributes::new(p)).collect())
        .collect();
    let mut sums: Vec<Vec<f64>> = graph
        .edges
        .iter()
        .map(|e| vec![0.0; e.centerline.len()])
        .collect();

    let mut result = Ok(());
    crate::assign::for_each_block_voxel(&header, |p, block_start| {
        if result.is_err() {
            return false;
        }
        if block_start && fg.is_block_vacant_at(p) {
            return false;
        }
        if !fg.get(p).is_foreground() {
            return true;
        }
        let edge = match edge_of_voxel(ids, p, graph.edges.len()) {
            Ok(Some(e)) => e,
            Ok(None) => return true,
            Err(e) => {
                result = Err(e);
                return false;
            }
        };
        let q = header.physical(p);
        let ties = indexes.per_edge[edge as usize].nearest_ties(q);
        debug_assert!(!ties.is_empty(), "labeled edge has centerline points");
        let share = voxel_volume / ties.len() as f64;
        for t in &ties {
            attrs[edge as usize][t.payload as usize].assigned_volume += share;
        }
        if is_surface_voxel(fg, p) {
            let closest = &ties[0]; // smallest point index among exact ties
            let a = &mut attrs[edge as usize][closest.payload as usize];
            let d = closest.dist2.sqrt();
            a.min_dist = a.min_dist.min(d);
            a.max_dist = a.max_dist.max(d);
            a.surface_voxel_count += 1;
            sums[edge as usize][closest.payload as usize] += d;
        }
        true
    });
    result?;

    for (edge_attrs, edge_sums) in attrs.iter_mut().zip(&sums) {
        for (a, &s) in edge_attrs.iter_mut().zip(edge_sums) {
            if a.surface_voxel_count > 0 {
                a.avg_dist = s / a.surface_voxel_count as f64;
            } else {
                a.min_dist = 0.0;
            }
        }
    }
    Ok(attrs)
}

/// Mark inner points: a point is inner when it has no assigned surface
/// voxels, or when one of its surface voxels touches (26-adjacency) a
/// surface voxel assigned to a different edge.
pub fn classify_inner_outer(
    fg: &BinaryVolume,
    ids: &LabelVolume,
    graph: &ProtoVesselGraph,
    indexes: &EdgePointIndexes,
    attrs: &mut [Vec<PointAttributes>],
) -> Result<()> {
    let header = fg.header().clone();
    let mut result = Ok(());
    crate::assign::for_each_block_voxel(&header, |p, block_start| {
        if result.is_err() {
            return false;
        }
        if block_start && fg.is_block_vacant_at(p) {
            return false;
        }
        if !is_surface_voxel(fg, p) {
            return true;
        }
        let edge = match edge_of_voxel(ids, p, graph.edges.len()) {
            Ok(Some(e)) => e,
            Ok(None) => return true,
            Err(e) => {
                result = Err(e);
                return false;
            }
        };
        let touches_other_edge = crate::labeling::OFFSETS_26.iter().any(|o| {
            let w = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
            if !is_surface_voxel(fg, w) {
                return false;
            }
            let l = ids.get(w);
            l != UNASSIGNED && l != edge
        });
        if touches_other_edge {
            let q = header.physical(p);
            let ties = indexes.per_edge[edge as usize].nearest_ties(q);
            attrs[edge as usize][ties[0].payload as usize].is_inner = true;
        }
        true
    });
    result?;

    for edge_attrs in attrs.iter_mut() {
        for a in edge_attrs.iter_mut() {
            if a.surface_voxel_count == 0 {
                a.is_inner = true;
            }
        }
    }
    Ok(())
}

fn population_stats(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Arc length from a node along the centerline to the last consecutive
/// inner point; zero when the first point is already outer.
fn inner_length(node_pos: Point3, points: &[Point3], inner: impl Fn(usize) -> bool) -> f64 {
    if points.is_empty() || !inner(0) {
        return 0.0;
    }
    let mut len = dist(node_pos, points[0]);
    let mut i = 0;
    while i + 1 < points.len() && inner(i + 1) {
        len += dist(points[i], points[i + 1]);
        i += 1;
    }
    len
}

/// Minimum surface distance at the centerline point closest to the node
/// (ties to the first point in centerline order); undefined when that
/// point has no surface voxels.
fn tip_radius(node_pos: Point3, attrs: &[PointAttributes]) -> Option<f64> {
    let mut best: Option<(f64, usize)> = None;
    for (i, a) in attrs.iter().enumerate() {
        let d = dist(node_pos, a.position);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    let (_, i) = best?;
    if attrs[i].has_surface() {
        Some(attrs[i].min_dist)
    } else {
        None
    }
}

/// Direct bulge size formula for an edge from its branch node `n_b` to its
/// leaf node `n_e`.
pub fn bulge_size_value(
    length: f64,
    inner_length_branch: f64,
    tip_radius_leaf: f64,
    avg_radius_mean: f64,
) -> Option<f64> {
    if avg_radius_mean <= 0.0 {
        return None;
    }
    Some((length - inner_length_branch + tip_radius_leaf) / avg_radius_mean)
}

/// Aggregate per-point attributes into edge features. Degrees decide
/// whether the edge is bulging (one endpoint of degree 1, the other of
/// degree greater than 2) and thus whether bulge size is defined.
#[allow(clippy::too_many_arguments)]
pub fn compute_edge_features(
    edge_id: u32,
    centerline: &[Point3],
    attrs: &[PointAttributes],
    pos_a: Point3,
    pos_b: Point3,
    degree_a: usize,
    degree_b: usize,
) -> EdgeFeatures {
    let mut f = EdgeFeatures::default();
    let arc = polyline_length(centerline);
    let attach_a = centerline.first().map_or(0.0, |&p| dist(pos_a, p));
    let attach_b = centerline.last().map_or(0.0, |&p| dist(pos_b, p));
    f.length = attach_a + arc + attach_b;
    f.distance = dist(pos_a, pos_b);
    if f.length > 0.0 {
        f.straightness = f.distance / f.length;
    } else {
        warn!("edge {edge_id} has zero length; straightness reported as 1.0");
        f.straightness = 1.0;
        f.degenerate_straightness = true;
    }
    f.volume = attrs.iter().map(|a| a.assigned_volume).sum();
    f.avg_cross_section = if f.length > 0.0 { f.volume / f.length } else { 0.0 };

    let surfaced = || attrs.iter().filter(|a| a.has_surface());
    (f.min_radius_mean, f.min_radius_std) = population_stats(surfaced().map(|a| a.min_dist));
    (f.max_radius_mean, f.max_radius_std) = population_stats(surfaced().map(|a| a.max_dist));
    (f.avg_radius_mean, f.avg_radius_std) = population_stats(surfaced().map(|a| a.avg_dist));
    (f.roundness_mean, f.roundness_std) =
        population_stats(surfaced().map(|a| a.roundness().unwrap()));

    f.inner_length_a = inner_length(pos_a, centerline, |i| attrs[i].is_inner);
    let rev: Vec<Point3> = centerline.iter().rev().copied().collect();
    let n = attrs.len();
    f.inner_length_b = inner_length(pos_b, &rev, |i| attrs[n - 1 - i].is_inner);
    f.tip_radius_a = tip_radius(pos_a, attrs);
    f.tip_radius_b = tip_radius(pos_b, attrs);

    f.bulge_size = bulge_for_degrees(&f, degree_a, degree_b, edge_id);
    f
}

/// Bulge size for the given endpoint degrees, or `None` when the edge is
/// not bulging or lacks the required data.
pub fn bulge_for_degrees(
    f: &EdgeFeatures,
    degree_a: usize,
    degree_b: usize,
    edge_id: u32,
) -> Option<f64> {
    let (inner_branch, tip_leaf) = if degree_a == 1 && degree_b > 2 {
        (f.inner_length_b, f.tip_radius_a?)
    } else if degree_b == 1 && degree_a > 2 {
        (f.inner_length_a, f.tip_radius_b?)
    } else {
        return None;
    };
    if f.avg_radius_mean <= 0.0 {
        warn!("edge {edge_id} is bulging but has zero mean radius; bulge size undefined");
        return None;
    }
    bulge_size_value(f.length, inner_branch, tip_leaf, f.avg_radius_mean)
}

/// Run the full annotation: accumulate attributes, classify inner points
/// and compute features for every edge.
pub fn annotate_graph(
    fg: &BinaryVolume,
    ids: &LabelVolume,
    graph: &ProtoVesselGraph,
    ctx: &StorageContext,
) -> Result<VesselGraph> {
    let indexes = EdgePointIndexes::build(graph, ctx)?;
    let mut attrs = accumulate_point_attributes(fg, ids, graph, &indexes)?;
    classify_inner_outer(fg, ids, graph, &indexes, &mut attrs)?;
    let degrees = graph.degrees();
    let mut edges = Vec::with_capacity(graph.edges.len());
    for (e, a) in graph.edges.iter().zip(attrs) {
        let features = compute_edge_features(
            e.id,
            &e.centerline,
            &a,
            graph.node(e.node_a).position,
            graph.node(e.node_b).position,
            degrees[&e.node_a],
            degrees[&e.node_b],
        );
        edges.push(AnnotatedEdge {
            id: e.id,
            node_a: e.node_a,
            node_b: e.node_b,
            centerline: e.centerline.clone(),
            attrs: a,
            features,
        });
    }
    Ok(VesselGraph {
        dims: graph.dims,
        spacing: graph.spacing,
        nodes: graph.nodes.clone(),
        edges,
    })
}

#[cfg(test)]
mod tests;
