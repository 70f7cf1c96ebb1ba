use super::*;
use crate::graph::{Edge, NodeKind};
use crate::memory::StorageContext;
use crate::volume::VoxelState;

fn ctx() -> (tempfile::TempDir, StorageContext) {
    let dir = tempfile::tempdir().unwrap();
    let ctx = StorageContext::new(dir.path(), 32 * 1024 * 1024);
    (dir, ctx)
}

fn node(id: u32, position: Point3) -> Node {
    Node {
        id,
        kind: NodeKind::End,
        voxels: vec![],
        voxel_count: 0,
        position,
    }
}

fn labeled_fixture(
    voxels: &[([i64; 3], u32)],
    dims: [u32; 3],
    spacing: [f64; 3],
    ctx: &StorageContext,
) -> (BinaryVolume, LabelVolume) {
    let mut fg = BinaryVolume::create(dims, spacing, ctx).unwrap();
    let mut ids = LabelVolume::create(dims, spacing, ctx).unwrap();
    for &(p, l) in voxels {
        fg.set(p, VoxelState::Foreground);
        ids.set(p, l);
    }
    (fg, ids)
}

#[test]
fn single_voxel_single_point_gets_full_volume() {
    let (_d, ctx) = ctx();
    let spacing = [0.5, 1.0, 2.0];
    let (fg, ids) = labeled_fixture(&[([4, 4, 4], 0)], [9, 9, 9], spacing, &ctx);
    let g = ProtoVesselGraph {
        dims: [9, 9, 9],
        spacing,
        nodes: vec![node(0, [1.0, 4.0, 8.0]), node(1, [3.0, 4.0, 8.0])],
        edges: vec![Edge {
            id: 0,
            node_a: 0,
            node_b: 1,
            centerline: vec![[2.0, 4.0, 8.0]],
            source_voxels: vec![],
        }],
    };
    let indexes = EdgePointIndexes::build(&g, &ctx).unwrap();
    let attrs = accumulate_point_attributes(&fg, &ids, &g, &indexes).unwrap();
    assert!((attrs[0][0].assigned_volume - 1.0).abs() < 1e-12); // 0.5 * 1 * 2
    assert_eq!(attrs[0][0].surface_voxel_count, 1);
}

#[test]
fn equidistant_voxel_splits_between_tied_points() {
    let (_d, ctx) = ctx();
    let (fg, ids) = labeled_fixture(&[([5, 4, 4], 0)], [11, 9, 9], [1.0; 3], &ctx);
    let g = ProtoVesselGraph {
        dims: [11, 9, 9],
        spacing: [1.0; 3],
        nodes: vec![node(0, [3.0, 4.0, 4.0]), node(1, [7.0, 4.0, 4.0])],
        edges: vec![Edge {
            id: 0,
            node_a: 0,
            node_b: 1,
            centerline: vec![[4.0, 4.0, 4.0], [6.0, 4.0, 4.0]],
            source_voxels: vec![],
        }],
    };
    let indexes = EdgePointIndexes::build(&g, &ctx).unwrap();
    let attrs = accumulate_point_attributes(&fg, &ids, &g, &indexes).unwrap();
    assert!((attrs[0][0].assigned_volume - 0.5).abs() < 1e-12);
    assert!((attrs[0][1].assigned_volume - 0.5).abs() < 1e-12);
    // the surface distance goes to the first tied point only
    assert_eq!(attrs[0][0].surface_voxel_count, 1);
    assert_eq!(attrs[0][1].surface_voxel_count, 0);
}

#[test]
fn nonexistent_edge_label_is_a_structural_error() {
    let (_d, ctx) = ctx();
    let (fg, ids) = labeled_fixture(&[([4, 4, 4], 9)], [9, 9, 9], [1.0; 3], &ctx);
    let g = ProtoVesselGraph {
        dims: [9, 9, 9],
        spacing: [1.0; 3],
        nodes: vec![node(0, [3.0, 4.0, 4.0]), node(1, [5.0, 4.0, 4.0])],
        edges: vec![Edge {
            id: 0,
            node_a: 0,
            node_b: 1,
            centerline: vec![[4.0, 4.0, 4.0]],
            source_voxels: vec![],
        }],
    };
    let indexes = EdgePointIndexes::build(&g, &ctx).unwrap();
    assert!(accumulate_point_attributes(&fg, &ids, &g, &indexes).is_err());
}

#[test]
fn straight_tube_features() {
    let (_d, ctx) = ctx();
    let dims = [20u32, 9, 9];
    let mut voxels = Vec::new();
    for x in 2..18i64 {
        for y in 3..6i64 {
            for z in 3..6i64 {
                voxels.push(([x, y, z], 0u32));
            }
        }
    }
    let (fg, ids) = labeled_fixture(&voxels, dims, [1.0; 3], &ctx);
    let g = ProtoVesselGraph {
        dims,
        spacing: [1.0; 3],
        nodes: vec![node(0, [2.0, 4.0, 4.0]), node(1, [17.0, 4.0, 4.0])],
        edges: vec![Edge {
            id: 0,
            node_a: 0,
            node_b: 1,
            centerline: (3..17).map(|x| [x as f64, 4.0, 4.0]).collect(),
            source_voxels: vec![],
        }],
    };
    let vg = annotate_graph(&fg, &ids, &g, &ctx).unwrap();
    let f = &vg.edges[0].features;
    assert!((f.length - 15.0).abs() < 1e-9);
    assert!((f.distance - 15.0).abs() < 1e-9);
    assert!((f.straightness - 1.0).abs() < 1e-9);
    // volume conservation: all 16*9 voxels labeled
    assert!((f.volume - 144.0).abs() < 1e-9);
    assert!((f.avg_cross_section - f.volume / f.length).abs() < 1e-9);
    // an isolated tube has only outer points
    assert!(vg.edges[0].attrs.iter().all(|a| !a.is_inner));
    assert!(f.roundness_mean > 0.0 && f.roundness_mean <= 1.0);
    assert!(f.bulge_size.is_none(), "end-to-end edges are not bulging");
}

#[test]
fn self_loop_has_zero_distance_and_straightness() {
    let (_d, ctx) = ctx();
    let (fg, ids) = labeled_fixture(&[([4, 4, 4], 0), ([5, 4, 4], 0)], [9, 9, 9], [1.0; 3], &ctx);
    let g = ProtoVesselGraph {
        dims: [9, 9, 9],
        spacing: [1.0; 3],
        nodes: vec![Node {
            id: 0,
            kind: NodeKind::Loop,
            voxels: vec![],
            voxel_count: 0,
            position: [4.0, 4.0, 4.0],
        }],
        edges: vec![Edge {
            id: 0,
            node_a: 0,
            node_b: 0,
            centerline: vec![[5.0, 4.0, 4.0], [5.0, 5.0, 4.0], [4.0, 5.0, 4.0]],
            source_voxels: vec![],
        }],
    };
    let vg = annotate_graph(&fg, &ids, &g, &ctx).unwrap();
    let f = &vg.edges[0].features;
    assert_eq!(f.distance, 0.0);
    assert_eq!(f.straightness, 0.0);
    assert!(f.length > 0.0);
}

#[test]
fn bulge_size_formula_unit_case() {
    assert_eq!(bulge_size_value(10.0, 4.0, 2.0, 4.0), Some(2.0));
    assert_eq!(bulge_size_value(10.0, 4.0, 2.0, 0.0), None);
}

#[test]
fn bulge_requires_leaf_and_branch_degrees() {
    let f = EdgeFeatures {
        length: 10.0,
        inner_length_a: 1.0,
        inner_length_b: 4.0,
        tip_radius_a: Some(2.0),
        tip_radius_b: Some(3.0),
        avg_radius_mean: 4.0,
        ..Default::default()
    };
    // a is the leaf, b the branch: (10 - 4 + 2) / 4
    assert_eq!(bulge_for_degrees(&f, 1, 3, 0), Some(2.0));
    // b is the leaf, a the branch: (10 - 1 + 3) / 4
    assert_eq!(bulge_for_degrees(&f, 3, 1, 0), Some(3.0));
    assert_eq!(bulge_for_degrees(&f, 2, 3, 0), None);
    assert_eq!(bulge_for_degrees(&f, 1, 2, 0), None);
    assert_eq!(bulge_for_degrees(&f, 1, 1, 0), None);
}

#[test]
fn population_std_is_zero_for_single_point() {
    let (mean, std) = population_stats([3.5f64].into_iter());
    assert_eq!(mean, 3.5);
    assert_eq!(std, 0.0);
    let (mean, std) = population_stats([1.0f64, 3.0].into_iter());
    assert_eq!(mean, 2.0);
    assert_eq!(std, 1.0);
}

#[test]
fn inner_length_stops_at_first_outer_point() {
    let pts: Vec<Point3> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
    let inner = [true, true, false, true, true];
    let len = inner_length([-1.0, 0.0, 0.0], &pts, |i| inner[i]);
    assert!((len - 2.0).abs() < 1e-12); // attach 1 + one inner segment
    let len = inner_length([-1.0, 0.0, 0.0], &pts, |_| false);
    assert_eq!(len, 0.0);
}
