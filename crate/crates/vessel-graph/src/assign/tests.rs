use super::*;
use crate::graph::{Edge, Node, NodeKind, ProtoVesselGraph};
use crate::memory::StorageContext;
use crate::volume::{BinaryVolume, VoxelState};
use std::collections::VecDeque;

fn ctx() -> (tempfile::TempDir, StorageContext) {
    let dir = tempfile::tempdir().unwrap();
    let ctx = StorageContext::new(dir.path(), 32 * 1024 * 1024);
    (dir, ctx)
}

/// A straight edge along x at the given (y, z) with end nodes.
fn straight_graph(edges: &[(i64, i64, std::ops::Range<i64>)], dims: [u32; 3]) -> ProtoVesselGraph {
    let mut g = ProtoVesselGraph {
        dims,
        spacing: [1.0; 3],
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    for (i, (y, z, xs)) in edges.iter().enumerate() {
        let a = g.nodes.len() as u32;
        g.nodes.push(Node {
            id: a,
            kind: NodeKind::End,
            voxels: vec![],
            voxel_count: 0,
            position: [xs.start as f64 - 1.0, *y as f64, *z as f64],
        });
        let b = g.nodes.len() as u32;
        g.nodes.push(Node {
            id: b,
            kind: NodeKind::End,
            voxels: vec![],
            voxel_count: 0,
            position: [xs.end as f64, *y as f64, *z as f64],
        });
        g.edges.push(Edge {
            id: i as u32,
            node_a: a,
            node_b: b,
            centerline: xs.clone().map(|x| [x as f64, *y as f64, *z as f64]).collect(),
            source_voxels: vec![],
        });
    }
    g
}

#[test]
fn single_edge_claims_all_foreground() {
    let (_d, ctx) = ctx();
    let dims = [20u32, 9, 9];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    for x in 2..18i64 {
        for y in 2..7i64 {
            for z in 2..7i64 {
                fg.set([x, y, z], VoxelState::Foreground);
            }
        }
    }
    let g = straight_graph(&[(4, 4, 3..17)], dims);
    let ids = voronoi_map(&fg, &g, &ctx).unwrap();
    fg.for_each_foreground(|p| assert_eq!(ids.get(p), 0));
    assert_eq!(ids.get([0, 0, 0]), UNASSIGNED);
}

#[test]
fn equidistant_voxels_take_the_lower_edge_id() {
    let (_d, ctx) = ctx();
    let dims = [16u32, 11, 5];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    for x in 2..14i64 {
        for y in 2..9i64 {
            fg.set([x, y, 2], VoxelState::Foreground);
        }
    }
    // two parallel edges at y=3 and y=7; y=5 voxels are equidistant
    let g = straight_graph(&[(3, 2, 2..14), (7, 2, 2..14)], dims);
    let ids = voronoi_map(&fg, &g, &ctx).unwrap();
    assert_eq!(ids.get([5, 5, 2]), 0, "tie resolves to the smaller edge id");
    assert_eq!(ids.get([5, 4, 2]), 0);
    assert_eq!(ids.get([5, 6, 2]), 1);
}

#[test]
fn voronoi_rejects_empty_graph() {
    let (_d, ctx) = ctx();
    let fg = BinaryVolume::create([8, 8, 8], [1.0; 3], &ctx).unwrap();
    let g = ProtoVesselGraph::default();
    assert!(voronoi_map(&fg, &g, &ctx).is_err());
}

/// Thick vessel next to a thin vessel: wall voxels of the thick vessel are
/// closer to the thin centerline, get cut off by the remap, and flood back
/// to the thick edge.
fn thick_thin_fixture(ctx: &StorageContext) -> (BinaryVolume, ProtoVesselGraph) {
    let dims = [24u32, 26, 13];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], ctx).unwrap();
    for x in 2..22i64 {
        for y in 0..26i64 {
            for z in 0..13i64 {
                let thick = (y - 8) * (y - 8) + (z - 6) * (z - 6) <= 36; // r=6 at y=8
                let thin = (y - 18) * (y - 18) + (z - 6) * (z - 6) <= 1; // r=1 at y=18
                if thick || thin {
                    fg.set([x, y, z], VoxelState::Foreground);
                }
            }
        }
    }
    let g = straight_graph(&[(8, 6, 2..22), (18, 6, 2..22)], dims);
    (fg, g)
}

#[test]
fn misassigned_lobe_is_cut_off_and_flooded_back() {
    let (_d, ctx) = ctx();
    let (fg, g) = thick_thin_fixture(&ctx);
    let ids = voronoi_map(&fg, &g, &ctx).unwrap();
    // the top wall of the thick vessel (y=14, distance 6 from its own
    // centerline, 4 from the thin one) is captured by the thin edge
    assert_eq!(ids.get([10, 14, 6]), 1);

    let mut ids = ids;
    remap_components(&mut ids, &g, &ctx).unwrap();
    assert_eq!(
        ids.get([10, 14, 6]),
        UNASSIGNED,
        "disconnected same-id lobe must lose its label"
    );
    // the thin vessel keeps its own region
    assert_eq!(ids.get([10, 18, 6]), 1);

    let (regions, region_labels) = identify_cutoff_regions(&fg, &ids, &ctx).unwrap();
    assert!(!regions.is_empty());
    flood_cutoff_regions(&mut ids, &regions, &region_labels, &ctx).unwrap();
    assert_eq!(ids.get([10, 14, 6]), 0, "lobe floods back to the thick edge");

    // totality: every foreground voxel labeled
    fg.for_each_foreground(|p| assert_ne!(ids.get(p), UNASSIGNED, "unlabeled {p:?}"));
}

#[test]
fn identify_regions_bbox_and_counts() {
    let (_d, ctx) = ctx();
    let dims = [40u32, 40, 40];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    let ids = LabelVolume::create(dims, [1.0; 3], &ctx).unwrap();

    // nothing unassigned in an empty volume
    let (regions, _) = identify_cutoff_regions(&fg, &ids, &ctx).unwrap();
    assert!(regions.is_empty());

    // one 3x3x3 cube of unassigned foreground
    for z in 10..13i64 {
        for y in 10..13i64 {
            for x in 10..13i64 {
                fg.set([x, y, z], VoxelState::Foreground);
            }
        }
    }
    // plus a distant pair
    fg.set([30, 30, 30], VoxelState::Foreground);
    fg.set([30, 31, 30], VoxelState::Foreground);
    let (regions, _) = identify_cutoff_regions(&fg, &ids, &ctx).unwrap();
    assert_eq!(regions.len(), 2);
    assert_eq!(regions[0].bbox_min, [10, 10, 10]);
    assert_eq!(regions[0].bbox_max, [12, 12, 12]);
    assert_eq!(regions[0].voxel_count, 27);
    let total: u64 = regions.iter().map(|r| r.voxel_count).sum();
    assert_eq!(total, fg.count_foreground());
}

#[test]
fn region_without_labeled_boundary_stays_unassigned() {
    let (_d, ctx) = ctx();
    let dims = [16u32, 16, 16];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    for z in 4..8i64 {
        for y in 4..8i64 {
            for x in 4..8i64 {
                fg.set([x, y, z], VoxelState::Foreground);
            }
        }
    }
    let mut ids = LabelVolume::create(dims, [1.0; 3], &ctx).unwrap();
    let (regions, region_labels) = identify_cutoff_regions(&fg, &ids, &ctx).unwrap();
    assert_eq!(regions.len(), 1);
    flood_cutoff_regions(&mut ids, &regions, &region_labels, &ctx).unwrap();
    fg.for_each_foreground(|p| assert_eq!(ids.get(p), UNASSIGNED));
}

/// Multi-source breadth-first L1 oracle: synchronous rounds, majority vote
/// among labeled 6-neighbors, ties to the smallest id.
fn flood_oracle(
    fg: &[[i64; 3]],
    labeled: &std::collections::HashMap<[i64; 3], u32>,
) -> std::collections::HashMap<[i64; 3], u32> {
    let mut labels = labeled.clone();
    let unassigned: Vec<[i64; 3]> = fg.iter().copied().filter(|p| !labels.contains_key(p)).collect();
    let mut frontier: VecDeque<[i64; 3]> = unassigned.iter().copied().collect();
    loop {
        let mut updates = Vec::new();
        for &p in &frontier {
            if labels.contains_key(&p) {
                continue;
            }
            let mut votes: Vec<(u32, u32)> = Vec::new();
            for o in [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]] {
                let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                if let Some(&l) = labels.get(&q) {
                    match votes.iter_mut().find(|(v, _)| *v == l) {
                        Some((_, c)) => *c += 1,
                        None => votes.push((l, 1)),
                    }
                }
            }
            if !votes.is_empty() {
                votes.sort_by_key(|&(l, c)| (std::cmp::Reverse(c), l));
                updates.push((p, votes[0].0));
            }
        }
        if updates.is_empty() {
            return labels;
        }
        for (p, l) in updates {
            labels.insert(p, l);
        }
        frontier = fg.iter().copied().filter(|p| !labels.contains_key(p)).collect();
    }
}

#[test]
fn slab_between_two_faces_splits_at_the_midplane() {
    let (_d, ctx) = ctx();
    let dims = [19u32, 7, 7];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    let mut ids = LabelVolume::create(dims, [1.0; 3], &ctx).unwrap();
    let mut fg_list = Vec::new();
    let mut labeled = std::collections::HashMap::new();
    for x in 2..17i64 {
        for y in 2..5i64 {
            for z in 2..5i64 {
                fg.set([x, y, z], VoxelState::Foreground);
                fg_list.push([x, y, z]);
                // label the two end caps with different edges
                if x == 2 {
                    ids.set([x, y, z], 7);
                    labeled.insert([x, y, z], 7);
                } else if x == 16 {
                    ids.set([x, y, z], 3);
                    labeled.insert([x, y, z], 3);
                }
            }
        }
    }
    let (regions, region_labels) = identify_cutoff_regions(&fg, &ids, &ctx).unwrap();
    assert_eq!(regions.len(), 1);
    flood_cutoff_regions(&mut ids, &regions, &region_labels, &ctx).unwrap();

    let oracle = flood_oracle(&fg_list, &labeled);
    for p in &fg_list {
        assert_eq!(ids.get(*p), oracle[p], "voxel {p:?}");
    }
    // the equidistant middle column resolves to the smaller id
    assert_eq!(ids.get([9, 3, 3]), 3);
    assert_eq!(ids.get([8, 3, 3]), 7);
    assert_eq!(ids.get([10, 3, 3]), 3);
}

#[test]
fn assignment_is_deterministic() {
    let (_d, ctx) = ctx();
    let (fg, g) = thick_thin_fixture(&ctx);
    let (ids1, _) = assign_branches(&fg, &g, &ctx).unwrap();
    let (ids2, _) = assign_branches(&fg, &g, &ctx).unwrap();
    let d = fg.dims();
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            for x in 0..d[0] as i64 {
                assert_eq!(ids1.get([x, y, z]), ids2.get([x, y, z]));
            }
        }
    }
}

#[test]
fn voronoi_block_loads_stay_local() {
    let (_d, ctx) = ctx();
    let dims = [96u32, 64, 64];
    let mut fg = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    for x in 2..94i64 {
        for y in 20..44i64 {
            for z in 20..44i64 {
                if (y - 32) * (y - 32) + (z - 32) * (z - 32) <= 100 {
                    fg.set([x, y, z], VoxelState::Foreground);
                }
            }
        }
    }
    let g = straight_graph(&[(32, 32, 2..94)], dims);
    let loads_before = fg.block_loads();
    let ids = voronoi_map(&fg, &g, &ctx).unwrap();
    let fg_loads = fg.block_loads() - loads_before;
    let id_loads = ids.block_loads();
    let blocks = fg.header().block_count() as u64;
    assert!(
        fg_loads + id_loads <= 2 * blocks,
        "{fg_loads} + {id_loads} block loads exceeds 2 x {blocks}"
    );
}
