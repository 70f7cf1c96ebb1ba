//! Streaming extraction of the proto graph from a skeleton volume.
//!
//! Voxels are classified by foreground 26-neighbor count, connected
//! components are found per class in one slab-ordered labeling pass, and
//! the resulting node components and regular runs are assembled into nodes
//! and edges. Run tips are matched to nodes through a static point index
//! over all node voxels.

use std::collections::HashMap;

use crate::error::{Result, VesselGraphError};
use crate::geometry::dist2;
use crate::index::{build_point_index, PointRecord};
use crate::labeling::{label_components, Connectivity, OFFSETS_26};
use crate::memory::StorageContext;
use crate::volume::{BinaryVolume, VoxelState, BLOCK_EDGE};

use super::{Edge, Node, NodeId, NodeKind, ProtoVesselGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkeletonVoxelClass {
    Regular,
    End,
    Branch,
}

impl SkeletonVoxelClass {
    fn code(self) -> VoxelState {
        match self {
            SkeletonVoxelClass::Regular => VoxelState::Foreground,
            SkeletonVoxelClass::End => VoxelState::FixedForeground,
            SkeletonVoxelClass::Branch => VoxelState::Erased,
        }
    }

    fn from_code(s: VoxelState) -> Option<SkeletonVoxelClass> {
        match s {
            VoxelState::Background => None,
            VoxelState::Foreground => Some(SkeletonVoxelClass::Regular),
            VoxelState::FixedForeground => Some(SkeletonVoxelClass::End),
            VoxelState::Erased => Some(SkeletonVoxelClass::Branch),
        }
    }
}

/// Classify one skeleton voxel by its foreground 26-neighbor count:
/// fewer than two neighbors is an end, exactly two is regular, more is a
/// branch voxel. Returns `None` on background.
pub fn classify_voxel(skel: &BinaryVolume, p: [i64; 3]) -> Option<SkeletonVoxelClass> {
    if !skel.get(p).is_foreground() {
        return None;
    }
    let n = OFFSETS_26
        .iter()
        .filter(|o| skel.get([p[0] + o[0], p[1] + o[1], p[2] + o[2]]).is_foreground())
        .count();
    Some(match n {
        0 | 1 => SkeletonVoxelClass::End,
        2 => SkeletonVoxelClass::Regular,
        _ => SkeletonVoxelClass::Branch,
    })
}

/// Per-voxel classes packed into a scratch 2-bit volume.
fn classify_to_volume(skel: &BinaryVolume, ctx: &StorageContext) -> Result<BinaryVolume> {
    let mut classes = BinaryVolume::create(skel.dims(), skel.spacing(), ctx)?;
    skel.for_each_foreground(|p| {
        let class = classify_voxel(skel, p).unwrap();
        classes.set(p, class.code());
    });
    Ok(classes)
}

struct Component {
    class: SkeletonVoxelClass,
    voxels: Vec<u64>, // ascending
}

/// Extract nodes, edges and centerlines from a skeleton in streaming
/// passes. Connected components of end voxels and of branch voxels become
/// nodes (positioned at their physical barycenter); maximal runs of regular
/// voxels become edges whose tips attach to the nodes found in their
/// 26-neighborhood. A run without any adjacent node voxel forms a closed
/// loop and receives a synthetic loop node at its smallest voxel.
pub fn extract_proto_graph(skel: &BinaryVolume, ctx: &StorageContext) -> Result<ProtoVesselGraph> {
    let header = skel.header().clone();
    let classes = classify_to_volume(skel, ctx)?;

    let mut labeling = label_components(
        header.dims,
        header.spacing,
        Connectivity::TwentySix,
        |p| SkeletonVoxelClass::from_code(classes.get(p)),
        |p| classes.is_block_vacant_at(p),
        ctx,
    )?;

    // Gather per-component voxel lists in ascending order.
    let mut components: HashMap<u32, Component> = HashMap::new();
    {
        let d = header.dims;
        for z in 0..d[2] as i64 {
            for y in 0..d[1] as i64 {
                let mut x = 0i64;
                while x < d[0] as i64 {
                    if x % BLOCK_EDGE as i64 == 0 && classes.is_block_vacant_at([x, y, z]) {
                        x += BLOCK_EDGE as i64;
                        continue;
                    }
                    let p = [x, y, z];
                    if let Some(class) = SkeletonVoxelClass::from_code(classes.get(p)) {
                        let root = labeling.root_at(p).expect("classified voxel unlabeled");
                        components
                            .entry(root)
                            .or_insert_with(|| Component {
                                class,
                                voxels: Vec::new(),
                            })
                            .voxels
                            .push(header.linearize(p));
                    }
                    x += 1;
                }
            }
        }
    }

    let mut comps: Vec<Component> = components.into_values().collect();
    comps.sort_by_key(|c| c.voxels[0]);

    // Node components first, in order of their smallest voxel.
    let mut nodes: Vec<Node> = Vec::new();
    let mut runs: Vec<Vec<u64>> = Vec::new();
    for c in comps {
        match c.class {
            SkeletonVoxelClass::Regular => runs.push(c.voxels),
            class => {
                let id = nodes.len() as NodeId;
                nodes.push(make_node(id, node_kind(class), c.voxels, &header));
            }
        }
    }

    // Index of all node voxels, in voxel coordinates for adjacency queries.
    let mut node_voxels: Vec<(NodeId, u64)> = Vec::new();
    for n in &nodes {
        for &v in &n.voxels {
            node_voxels.push((n.id, v));
        }
    }
    let records: Vec<PointRecord> = node_voxels
        .iter()
        .enumerate()
        .map(|(i, &(_, lin))| {
            let p = header.delinearize(lin);
            PointRecord {
                position: [p[0] as f64, p[1] as f64, p[2] as f64],
                payload: i as u64,
            }
        })
        .collect();
    let node_index = build_point_index(&records, ctx)?;

    // Candidate nodes adjacent to a tip voxel, as (physical distance to the
    // nearest candidate voxel, node id), ascending.
    let tip_candidates = |tip: u64| -> Vec<(f64, NodeId)> {
        let p = header.delinearize(tip);
        let q = [p[0] as f64, p[1] as f64, p[2] as f64];
        let mut best: HashMap<NodeId, f64> = HashMap::new();
        for hit in node_index.within_radius(q, 3f64.sqrt() + 1e-9) {
            let (node_id, lin) = node_voxels[hit.payload as usize];
            let v = header.delinearize(lin);
            if (0..3).any(|i| (v[i] - p[i]).abs() > 1) {
                continue; // not a 26-neighbor
            }
            let d = dist2(header.physical(p), header.physical(v));
            let e = best.entry(node_id).or_insert(f64::INFINITY);
            if d < *e {
                *e = d;
            }
        }
        let mut out: Vec<(f64, NodeId)> = best.into_iter().map(|(id, d)| (d, id)).collect();
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        out
    };

    let mut edges: Vec<Edge> = Vec::new();
    for run in runs {
        let ordered = order_run(&run, &header);
        let edge_id = edges.len() as u32;
        match ordered {
            OrderedRun::Path(voxels) => {
                let tip_a = voxels[0];
                let tip_b = *voxels.last().unwrap();
                let (node_a, node_b) = if voxels.len() == 1 {
                    let cands = tip_candidates(tip_a);
                    match cands.len() {
                        0 => return Err(dangling(tip_a, &header)),
                        1 => (cands[0].1, cands[0].1),
                        _ => (cands[0].1, cands[1].1),
                    }
                } else {
                    let ca = tip_candidates(tip_a);
                    let cb = tip_candidates(tip_b);
                    if ca.is_empty() {
                        return Err(dangling(tip_a, &header));
                    }
                    if cb.is_empty() {
                        return Err(dangling(tip_b, &header));
                    }
                    (ca[0].1, cb[0].1)
                };
                edges.push(make_edge(edge_id, node_a, node_b, voxels, &header));
            }
            OrderedRun::Cycle(anchor, voxels) => {
                let id = nodes.len() as NodeId;
                nodes.push(make_node(
                    id,
                    NodeKind::Loop,
                    vec![anchor],
                    &header,
                ));
                edges.push(make_edge(edge_id, id, id, voxels, &header));
            }
        }
    }

    Ok(ProtoVesselGraph {
        dims: header.dims,
        spacing: header.spacing,
        nodes,
        edges,
    })
}

fn node_kind(class: SkeletonVoxelClass) -> NodeKind {
    match class {
        SkeletonVoxelClass::End => NodeKind::End,
        SkeletonVoxelClass::Branch => NodeKind::Branch,
        SkeletonVoxelClass::Regular => unreachable!("regular voxels form edges"),
    }
}

fn make_node(
    id: NodeId,
    kind: NodeKind,
    voxels: Vec<u64>,
    header: &crate::volume::VolumeHeader,
) -> Node {
    let mut sum = [0.0f64; 3];
    for &lin in &voxels {
        let phys = header.physical(header.delinearize(lin));
        for i in 0..3 {
            sum[i] += phys[i];
        }
    }
    let n = voxels.len() as f64;
    Node {
        id,
        kind,
        position: [sum[0] / n, sum[1] / n, sum[2] / n],
        voxel_count: voxels.len(),
        voxels,
    }
}

fn make_edge(
    id: u32,
    node_a: NodeId,
    node_b: NodeId,
    voxels: Vec<u64>,
    header: &crate::volume::VolumeHeader,
) -> Edge {
    let centerline = voxels
        .iter()
        .map(|&lin| header.physical(header.delinearize(lin)))
        .collect();
    Edge {
        id,
        node_a,
        node_b,
        centerline,
        source_voxels: voxels,
    }
}

fn dangling(tip: u64, header: &crate::volume::VolumeHeader) -> VesselGraphError {
    VesselGraphError::Structural(format!(
        "dangling run tip at voxel {:?}: no node voxel in its 26-neighborhood",
        header.delinearize(tip)
    ))
}

enum OrderedRun {
    Path(Vec<u64>),
    /// Anchor voxel for the synthetic node plus the remaining cycle voxels
    /// ordered from one anchor neighbor to the other.
    Cycle(u64, Vec<u64>),
}

/// Order a regular component into a path (tip to tip) or a cycle. Every
/// regular voxel has at most two neighbors within its component, so the
/// component is a simple path or a simple cycle.
fn order_run(run: &[u64], header: &crate::volume::VolumeHeader) -> OrderedRun {
    if run.len() == 1 {
        return OrderedRun::Path(run.to_vec());
    }
    let set: std::collections::HashSet<u64> = run.iter().copied().collect();
    let neighbors = |lin: u64| -> Vec<u64> {
        let p = header.delinearize(lin);
        let mut out: Vec<u64> = OFFSETS_26
            .iter()
            .map(|o| [p[0] + o[0], p[1] + o[1], p[2] + o[2]])
            .filter(|q| header.in_range(*q))
            .map(|q| header.linearize(q))
            .filter(|l| set.contains(l))
            .collect();
        out.sort_unstable();
        out
    };

    let mut tips: Vec<u64> = run
        .iter()
        .copied()
        .filter(|&v| neighbors(v).len() <= 1)
        .collect();
    tips.sort_unstable();

    let walk = |start: u64, first_prev: Option<u64>, len: usize| -> Vec<u64> {
        let mut out = Vec::with_capacity(len);
        let mut prev = first_prev;
        let mut cur = start;
        loop {
            out.push(cur);
            let next = neighbors(cur).into_iter().find(|&n| Some(n) != prev);
            match next {
                Some(n) if out.len() < len => {
                    prev = Some(cur);
                    cur = n;
                }
                _ => break,
            }
        }
        out
    };

    if tips.is_empty() {
        // closed loop: synthesize the node at the smallest voxel
        let anchor = run[0];
        let nb = neighbors(anchor);
        debug_assert_eq!(nb.len(), 2, "cycle voxel must have two run neighbors");
        let path = walk(nb[0], Some(anchor), run.len() - 1);
        debug_assert_eq!(*path.last().unwrap(), nb[1]);
        OrderedRun::Cycle(anchor, path)
    } else {
        let path = walk(tips[0], None, run.len());
        debug_assert_eq!(path.len(), run.len(), "run is not a simple path");
        OrderedRun::Path(path)
    }
}
