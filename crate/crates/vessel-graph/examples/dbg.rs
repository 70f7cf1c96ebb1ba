use vessel_graph::memory::StorageContext;
use vessel_graph::synth::{synth_phantom, Phantom, PhantomKind};
use vessel_graph::thinning::{skeletonize, ThinningConfig};
use vessel_graph::graph::extract_proto_graph;
use vessel_graph::assign::assign_branches;
use vessel_graph::features::annotate_graph;
use vessel_graph::refine::refine;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = StorageContext::new(dir.path(), 64 * 1024 * 1024);
    let p = Phantom { kind: PhantomKind::Cylinder { radius: 4.0, length: 40.0 } };
    let fg = synth_phantom(&p, [48, 16, 16], [1.0; 3], &ctx).unwrap();
    println!("fg voxels: {}", fg.count_foreground());
    let mut skel = fg.duplicate(&ctx).unwrap();
    let st = skeletonize(&mut skel, &ThinningConfig::first_pass(), &ctx).unwrap();
    println!("skel voxels: {} deleted {}", skel.count_foreground(), st.deleted);
    let proto = extract_proto_graph(&skel, &ctx).unwrap();
    println!("proto: {} nodes {} edges", proto.nodes.len(), proto.edges.len());
    for n in &proto.nodes { println!("  node {} {:?} voxels {} pos {:?}", n.id, n.kind, n.voxels.len(), n.position); }
    for e in &proto.edges { println!("  edge {} {}-{} pts {}", e.id, e.node_a, e.node_b, e.centerline.len()); }
    let (ids, regions) = assign_branches(&fg, &proto, &ctx).unwrap();
    println!("regions: {}", regions.len());
    let vg = annotate_graph(&fg, &ids, &proto, &ctx).unwrap();
    for e in &vg.edges {
        println!("  edge {} len {:.2} bulge {:?} avgR {:.2} innerA {:.2} innerB {:.2} tipA {:?} tipB {:?}",
            e.id, e.features.length, e.features.bulge_size, e.features.avg_radius_mean,
            e.features.inner_length_a, e.features.inner_length_b, e.features.tip_radius_a, e.features.tip_radius_b);
    }
    let refined = refine(vg, 1.5);
    println!("refined: {} nodes {} edges", refined.nodes.len(), refined.edges.len());
}
