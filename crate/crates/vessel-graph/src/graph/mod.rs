//! Proto vessel graph: nodes, edges and centerlines extracted from a voxel
//! skeleton.

mod extract;
mod smooth;

pub use extract::{classify_voxel, extract_proto_graph, SkeletonVoxelClass};
pub use smooth::smooth_centerline;

use crate::geometry::Point3;

pub type NodeId = u32;
pub type EdgeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    End,
    Branch,
    /// Synthetic anchor for a closed voxel loop.
    Loop,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Linear positions of the node's voxels, ascending. Empty on graphs
    /// loaded from a file, which only persist the count.
    pub voxels: Vec<u64>,
    pub voxel_count: usize,
    /// Physical-space barycenter of the voxel centers.
    pub position: Point3,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: EdgeId,
    pub node_a: NodeId,
    pub node_b: NodeId,
    /// Physical points of the regular-voxel run, ordered from the tip
    /// adjacent to `node_a` to the tip adjacent to `node_b`. Node
    /// barycenters are not part of the centerline.
    pub centerline: Vec<Point3>,
    /// Linear positions of the run voxels in centerline order.
    pub source_voxels: Vec<u64>,
}

impl Edge {
    pub fn is_self_loop(&self) -> bool {
        self.node_a == self.node_b
    }
}

#[derive(Debug, Clone, Default)]
pub struct ProtoVesselGraph {
    pub dims: [u32; 3],
    pub spacing: [f64; 3],
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ProtoVesselGraph {
    pub fn node(&self, id: NodeId) -> &Node {
        match self.nodes.binary_search_by_key(&id, |n| n.id) {
            Ok(i) => &self.nodes[i],
            Err(_) => panic!("node {id} not in graph"),
        }
    }

    /// Degree per node id; self-loops count twice.
    pub fn degrees(&self) -> std::collections::BTreeMap<NodeId, usize> {
        let mut d: std::collections::BTreeMap<NodeId, usize> =
            self.nodes.iter().map(|n| (n.id, 0)).collect();
        for e in &self.edges {
            *d.get_mut(&e.node_a).unwrap() += 1;
            *d.get_mut(&e.node_b).unwrap() += 1;
        }
        d
    }

    pub fn total_centerline_points(&self) -> usize {
        self.edges.iter().map(|e| e.centerline.len()).sum()
    }
}
