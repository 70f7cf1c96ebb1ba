//! Graph refinement: prune spurious bulges and merge degree-2 chains.
//!
//! Each pass walks all nodes and collects incident bulging edges whose
//! bulge size falls below the threshold, but always retains at least two
//! edges per node (dropping the largest-bulge entries from the deletion
//! set first). Collected edges are deleted, orphaned nodes removed, and
//! degree-2 nodes merged by concatenating their two centerlines; merged
//! edge features are recomputed from the combined point attributes. Passes
//! repeat until nothing is deleted.

use std::collections::BTreeSet;

use crate::features::{
    bulge_for_degrees, compute_edge_features, AnnotatedEdge, PointAttributes, VesselGraph,
};
use crate::graph::NodeId;

/// One refinement pass plus the trailing merge, repeated to a fixed point.
/// `threshold` is the single dimensionless pruning parameter.
pub fn refine(mut g: VesselGraph, threshold: f64) -> VesselGraph {
    loop {
        let degrees = g.degrees();
        let mut to_delete: BTreeSet<u32> = BTreeSet::new();
        for node in &g.nodes {
            let incident: Vec<&AnnotatedEdge> = g
                .edges
                .iter()
                .filter(|e| e.node_a == node.id || e.node_b == node.id)
                .collect();
            // deletable: bulging with bulge size below the threshold
            let mut prunable: Vec<(f64, u32)> = incident
                .iter()
                .filter_map(|e| {
                    bulge_for_degrees(&e.features, degrees[&e.node_a], degrees[&e.node_b], e.id)
                        .filter(|&b| b < threshold)
                        .map(|b| (b, e.id))
                })
                .collect();
            // retain two edges per node: drop the largest bulges from the
            // deletion set (ties drop the larger id)
            prunable.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            while incident.len() - prunable.len() < 2 && !prunable.is_empty() {
                prunable.pop();
            }
            to_delete.extend(prunable.into_iter().map(|(_, id)| id));
        }

        let deleted_any = !to_delete.is_empty();
        g.edges.retain(|e| !to_delete.contains(&e.id));
        remove_isolated_nodes(&mut g);
        merge_degree2(&mut g);

        if !deleted_any {
            break;
        }
    }
    // refresh bulge sizes against the final topology
    let degrees = g.degrees();
    for e in g.edges.iter_mut() {
        e.features.bulge_size =
            bulge_for_degrees(&e.features, degrees[&e.node_a], degrees[&e.node_b], e.id);
    }
    g
}

fn remove_isolated_nodes(g: &mut VesselGraph) {
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    for e in &g.edges {
        used.insert(e.node_a);
        used.insert(e.node_b);
    }
    g.nodes.retain(|n| used.contains(&n.id));
}

/// Merge every node whose degree-2 comes from two distinct edges; nodes
/// carrying a self-loop are left alone. The merged edge keeps the smaller
/// id, concatenates both centerlines with the junction barycenter counted
/// once, and recomputes its features from the combined point attributes.
pub fn merge_degree2(g: &mut VesselGraph) {
    loop {
        let degrees = g.degrees();
        let candidate = g.nodes.iter().find_map(|n| {
            if degrees[&n.id] != 2 {
                return None;
            }
            let incident: Vec<usize> = g
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.node_a == n.id || e.node_b == n.id)
                .map(|(i, _)| i)
                .collect();
            // a single self-loop contributes degree 2 through one edge
            if incident.len() != 2 {
                return None;
            }
            Some((n.id, incident[0], incident[1]))
        });
        let Some((node_id, i1, i2)) = candidate else {
            return;
        };
        let junction = g.node(node_id).position;
        let (i_keep, i_drop) = if g.edges[i1].id < g.edges[i2].id {
            (i1, i2)
        } else {
            (i2, i1)
        };
        let e2 = g.edges.remove(i_drop);
        let i_keep = if i_drop < i_keep { i_keep - 1 } else { i_keep };
        let e1 = g.edges.remove(i_keep);
        let merged_id = e1.id.min(e2.id);

        // orient e1 to end at the junction, e2 to start at it; the junction
        // barycenter enters the combined centerline exactly once
        let (far_a, mut centerline, mut attrs) = oriented_towards(e1, node_id);
        let (far_b, cl2, at2) = oriented_away(e2, node_id);
        centerline.push(junction);
        attrs.push(PointAttributes {
            position: junction,
            assigned_volume: 0.0,
            min_dist: 0.0,
            max_dist: 0.0,
            avg_dist: 0.0,
            surface_voxel_count: 0,
            is_inner: true,
        });
        centerline.extend(cl2);
        attrs.extend(at2);

        g.nodes.retain(|n| n.id != node_id);
        let degrees_after = {
            let mut d = g.degrees();
            *d.entry(far_a).or_insert(0) += 1;
            *d.entry(far_b).or_insert(0) += 1;
            d
        };
        let pos_a = g.node(far_a).position;
        let pos_b = g.node(far_b).position;
        let merged_features = compute_edge_features(
            merged_id,
            &centerline,
            &attrs,
            pos_a,
            pos_b,
            degrees_after[&far_a],
            degrees_after[&far_b],
        );
        g.edges.push(AnnotatedEdge {
            id: merged_id,
            node_a: far_a,
            node_b: far_b,
            centerline,
            attrs,
            features: merged_features,
        });
        g.edges.sort_by_key(|e| e.id);
    }
}

fn oriented_towards(
    e: AnnotatedEdge,
    junction: NodeId,
) -> (NodeId, Vec<crate::geometry::Point3>, Vec<PointAttributes>) {
    if e.node_b == junction {
        (e.node_a, e.centerline, e.attrs)
    } else {
        debug_assert_eq!(e.node_a, junction);
        (
            e.node_b,
            e.centerline.into_iter().rev().collect(),
            e.attrs.into_iter().rev().collect(),
        )
    }
}

fn oriented_away(
    e: AnnotatedEdge,
    junction: NodeId,
) -> (NodeId, Vec<crate::geometry::Point3>, Vec<PointAttributes>) {
    if e.node_a == junction {
        (e.node_b, e.centerline, e.attrs)
    } else {
        debug_assert_eq!(e.node_b, junction);
        (
            e.node_a,
            e.centerline.into_iter().rev().collect(),
            e.attrs.into_iter().rev().collect(),
        )
    }
}
