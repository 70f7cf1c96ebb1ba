//! Voxel-to-branch assignment.
//!
//! Every foreground voxel of the original segmentation is mapped to exactly
//! one edge of the proto graph in four steps: nearest-centerline Voronoi
//! mapping, connected-component remapping (which strips regions that were
//! captured by a closer but unrelated centerline), cut-off region
//! identification with bounding boxes, and region flooding that
//! approximates L1 Voronoi cells of the adjacent labeled regions.

use std::collections::HashMap;

use log::warn;

use crate::error::{Result, VesselGraphError};
use crate::graph::ProtoVesselGraph;
use crate::index::{build_point_index, PointRecord};
use crate::interval::{Interval, IntervalTree};
use crate::labeling::{label_components, Connectivity};
use crate::memory::{StorageContext, TrackedVec};
use crate::volume::{BinaryVolume, LabelVolume, VolumeHeader, BLOCK_EDGE, UNASSIGNED};

/// A connected region of foreground voxels that lost their label during
/// remapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CutoffRegion {
    pub region_id: u32,
    /// Inclusive voxel bounds.
    pub bbox_min: [i64; 3],
    pub bbox_max: [i64; 3],
    pub voxel_count: u64,
}

/// Nearest-centerline labeling of all foreground voxels. Distances are
/// physical-space Euclidean over the points of all edges; exact ties go to
/// the smaller edge id, then the smaller point index. Traversal is in 32³
/// blocks for index query locality.
pub fn voronoi_map(
    fg: &BinaryVolume,
    graph: &ProtoVesselGraph,
    ctx: &StorageContext,
) -> Result<LabelVolume> {
    if graph.total_centerline_points() == 0 {
        return Err(VesselGraphError::InvalidInput(
            "voronoi mapping needs at least one centerline point".into(),
        ));
    }
    let mut records = Vec::with_capacity(graph.total_centerline_points());
    for e in &graph.edges {
        for (i, &p) in e.centerline.iter().enumerate() {
            records.push(PointRecord {
                position: p,
                payload: ((e.id as u64) << 32) | i as u64,
            });
        }
    }
    let index = build_point_index(&records, ctx)?;

    let header = fg.header().clone();
    let mut ids = LabelVolume::create(header.dims, header.spacing, ctx)?;
    for_each_block_voxel(&header, |p, block_start| {
        if block_start && fg.is_block_vacant_at(p) {
            return false;
        }
        if fg.get(p).is_foreground() {
            let q = header.physical(p);
            let hit = index.nearest(q).expect("index is nonempty");
            ids.set(p, (hit.payload >> 32) as u32);
        }
        true
    });
    Ok(ids)
}

/// Visit voxels block by block; the callback returns false on a block-start
/// voxel to skip the rest of the block.
pub(crate) fn for_each_block_voxel(header: &VolumeHeader, mut f: impl FnMut([i64; 3], bool) -> bool) {
    let d = header.dims;
    let nb = header.blocks_per_axis();
    for bz in 0..nb[2] {
        for by in 0..nb[1] {
            'block: for bx in 0..nb[0] {
                let x0 = (bx * BLOCK_EDGE) as i64;
                let y0 = (by * BLOCK_EDGE) as i64;
                let z0 = (bz * BLOCK_EDGE) as i64;
                let x1 = ((bx + 1) * BLOCK_EDGE).min(d[0]) as i64;
                let y1 = ((by + 1) * BLOCK_EDGE).min(d[1]) as i64;
                let z1 = ((bz + 1) * BLOCK_EDGE).min(d[2]) as i64;
                let mut first = true;
                for z in z0..z1 {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            if !f([x, y, z], first) {
                                continue 'block;
                            }
                            first = false;
                        }
                    }
                }
            }
        }
    }
}

/// Connected-component remapping: components are computed over
/// 26-connectivity where voxels merge iff they carry the same edge id; a
/// table built by sampling one centerline point per edge maps components
/// back to edge ids, and components no edge sampled become unassigned.
pub fn remap_components(
    ids: &mut LabelVolume,
    graph: &ProtoVesselGraph,
    ctx: &StorageContext,
) -> Result<()> {
    let header = ids.header().clone();
    let mut labeling = label_components(
        header.dims,
        header.spacing,
        Connectivity::TwentySix,
        |p| {
            let l = ids.get(p);
            if l == UNASSIGNED {
                None
            } else {
                Some(l)
            }
        },
        |p| ids.is_block_vacant_at(p),
        ctx,
    )?;

    // One sample per edge at its first centerline point, rounded to the
    // nearest voxel. A sample that misses its own edge's initial id (it
    // landed on background or inside another edge's region) falls back to
    // the nearest same-id foreground voxel in the 26-neighborhood.
    let mut table: HashMap<u32, u32> = HashMap::new();
    for e in &graph.edges {
        let Some(&pt) = e.centerline.first() else {
            continue;
        };
        let rounded = [
            (pt[0] / header.spacing[0]).round() as i64,
            (pt[1] / header.spacing[1]).round() as i64,
            (pt[2] / header.spacing[2]).round() as i64,
        ];
        let mut sample = None;
        if header.in_range(rounded) && ids.get(rounded) == e.id {
            sample = Some(rounded);
        } else {
            let mut best: Option<(f64, u64, [i64; 3])> = None;
            for o in crate::labeling::OFFSETS_26 {
                let q = [rounded[0] + o[0], rounded[1] + o[1], rounded[2] + o[2]];
                if !header.in_range(q) || ids.get(q) != e.id {
                    continue;
                }
                let d = crate::geometry::dist2(header.physical(q), pt);
                let key = (d, header.linearize(q), q);
                if best.map_or(true, |b| (key.0, key.1) < (b.0, b.1)) {
                    best = Some(key);
                }
            }
            if let Some((_, _, q)) = best {
                sample = Some(q);
            }
        }
        match sample {
            Some(q) => {
                let root = labeling.root_at(q).expect("sampled voxel is labeled");
                table.insert(root, e.id);
            }
            None => warn!(
                "edge {} has no reachable sample voxel; its regions become unassigned",
                e.id
            ),
        }
    }

    // Rewrite pass: map every labeled voxel through its component root.
    for_each_block_voxel(&header, |p, block_start| {
        if block_start && labeling.labels.is_block_vacant_at(p) {
            return false;
        }
        if let Some(root) = labeling.root_at(p) {
            match table.get(&root) {
                Some(&edge) => ids.set(p, edge),
                None => ids.set(p, UNASSIGNED),
            }
        }
        true
    });
    Ok(())
}

/// One region per 26-connected component of unassigned foreground voxels,
/// with exact bounding box and voxel count, gathered in a single pass.
/// Also returns a label volume holding each voxel's final region id.
pub fn identify_cutoff_regions(
    fg: &BinaryVolume,
    ids: &LabelVolume,
    ctx: &StorageContext,
) -> Result<(Vec<CutoffRegion>, LabelVolume)> {
    let header = fg.header().clone();
    let mut labeling = label_components(
        header.dims,
        header.spacing,
        Connectivity::TwentySix,
        |p| {
            if fg.get(p).is_foreground() && ids.get(p) == UNASSIGNED {
                Some(())
            } else {
                None
            }
        },
        |p| fg.is_block_vacant_at(p),
        ctx,
    )?;

    struct Agg {
        min: [i64; 3],
        max: [i64; 3],
        count: u64,
        first: u64,
    }
    let mut aggs: HashMap<u32, Agg> = HashMap::new();
    let d = header.dims;
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            let mut x = 0i64;
            while x < d[0] as i64 {
                if x % BLOCK_EDGE as i64 == 0 && fg.is_block_vacant_at([x, y, z]) {
                    x += BLOCK_EDGE as i64;
                    continue;
                }
                let p = [x, y, z];
                if let Some(root) = labeling.root_at(p) {
                    let lin = header.linearize(p);
                    let a = aggs.entry(root).or_insert(Agg {
                        min: p,
                        max: p,
                        count: 0,
                        first: lin,
                    });
                    a.count += 1;
                    for i in 0..3 {
                        a.min[i] = a.min[i].min(p[i]);
                        a.max[i] = a.max[i].max(p[i]);
                    }
                }
                x += 1;
            }
        }
    }

    let mut ordered: Vec<(u32, Agg)> = aggs.into_iter().collect();
    ordered.sort_by_key(|(_, a)| a.first);
    let mut regions = Vec::with_capacity(ordered.len());
    let mut region_of_root: HashMap<u32, u32> = HashMap::new();
    for (i, (root, a)) in ordered.into_iter().enumerate() {
        region_of_root.insert(root, i as u32);
        regions.push(CutoffRegion {
            region_id: i as u32,
            bbox_min: a.min,
            bbox_max: a.max,
            voxel_count: a.count,
        });
    }

    // Rewrite the scratch labels to final region ids.
    let mut region_labels = LabelVolume::create(header.dims, header.spacing, ctx)?;
    for_each_block_voxel(&header, |p, block_start| {
        if block_start && labeling.labels.is_block_vacant_at(p) {
            return false;
        }
        if let Some(root) = labeling.root_at(p) {
            region_labels.set(p, region_of_root[&root]);
        }
        true
    });
    Ok((regions, region_labels))
}

struct Subvolume {
    origin: [i64; 3],
    dims: [usize; 3],
    labels: TrackedVec<u32>,
    member: TrackedVec<bool>,
}

impl Subvolume {
    fn new(region: &CutoffRegion, header: &VolumeHeader, ctx: &StorageContext) -> Subvolume {
        // pad by one voxel so the labeled boundary is visible to the flood
        let origin = [
            (region.bbox_min[0] - 1).max(0),
            (region.bbox_min[1] - 1).max(0),
            (region.bbox_min[2] - 1).max(0),
        ];
        let end = [
            (region.bbox_max[0] + 1).min(header.dims[0] as i64 - 1),
            (region.bbox_max[1] + 1).min(header.dims[1] as i64 - 1),
            (region.bbox_max[2] + 1).min(header.dims[2] as i64 - 1),
        ];
        let dims = [
            (end[0] - origin[0] + 1) as usize,
            (end[1] - origin[1] + 1) as usize,
            (end[2] - origin[2] + 1) as usize,
        ];
        let n = dims[0] * dims[1] * dims[2];
        Subvolume {
            origin,
            dims,
            labels: TrackedVec::new(ctx.tracker().clone(), n, UNASSIGNED),
            member: TrackedVec::new(ctx.tracker().clone(), n, false),
        }
    }

    #[inline]
    fn local_index(&self, p: [i64; 3]) -> usize {
        let l = [
            (p[0] - self.origin[0]) as usize,
            (p[1] - self.origin[1]) as usize,
            (p[2] - self.origin[2]) as usize,
        ];
        l[0] + self.dims[0] * (l[1] + self.dims[1] * l[2])
    }

    /// Round-synchronous majority flood over member voxels; ties go to the
    /// smallest edge id. Returns when a round changes nothing.
    fn flood(&mut self) {
        let strides = [1usize, self.dims[0], self.dims[0] * self.dims[1]];
        loop {
            let labels = self.labels.as_slice();
            let mut updates: Vec<(usize, u32)> = Vec::new();
            for z in 0..self.dims[2] {
                for y in 0..self.dims[1] {
                    for x in 0..self.dims[0] {
                        let i = x + self.dims[0] * (y + self.dims[1] * z);
                        if !self.member[i] || labels[i] != UNASSIGNED {
                            continue;
                        }
                        let mut votes: Vec<(u32, u32)> = Vec::new(); // (label, count)
                        let mut consider = |j: usize| {
                            let l = labels[j];
                            if l != UNASSIGNED {
                                match votes.iter_mut().find(|(v, _)| *v == l) {
                                    Some((_, c)) => *c += 1,
                                    None => votes.push((l, 1)),
                                }
                            }
                        };
                        if x > 0 {
                            consider(i - strides[0]);
                        }
                        if x + 1 < self.dims[0] {
                            consider(i + strides[0]);
                        }
                        if y > 0 {
                            consider(i - strides[1]);
                        }
                        if y + 1 < self.dims[1] {
                            consider(i + strides[1]);
                        }
                        if z > 0 {
                            consider(i - strides[2]);
                        }
                        if z + 1 < self.dims[2] {
                            consider(i + strides[2]);
                        }
                        if !votes.is_empty() {
                            // majority label, ties to the smallest id
                            votes.sort_by_key(|&(l, c)| (std::cmp::Reverse(c), l));
                            updates.push((i, votes[0].0));
                        }
                    }
                }
            }
            if updates.is_empty() {
                return;
            }
            let labels = self.labels.as_mut_slice();
            for (i, l) in updates {
                labels[i] = l;
            }
        }
    }
}

/// Flood every cut-off region from its labeled boundary. Subvolumes are
/// collected in one stabbing pass over the volume, flooded separately, and
/// written back in a second pass. Regions without any labeled boundary stay
/// unassigned.
pub fn flood_cutoff_regions(
    ids: &mut LabelVolume,
    regions: &[CutoffRegion],
    region_labels: &LabelVolume,
    ctx: &StorageContext,
) -> Result<()> {
    if regions.is_empty() {
        return Ok(());
    }
    let header = ids.header().clone();
    let mut subs: Vec<Subvolume> = regions
        .iter()
        .map(|r| Subvolume::new(r, &header, ctx))
        .collect();

    // Nested interval trees over padded bounds: z, then y, then x.
    let z_tree = IntervalTree::build(
        subs.iter()
            .enumerate()
            .map(|(i, s)| Interval {
                lo: s.origin[2],
                hi: s.origin[2] + s.dims[2] as i64 - 1,
                payload: i,
            })
            .collect(),
    );

    // Stabbing walk over the volume: z tree, then a y tree per slice, then
    // an x tree per line.
    fn stab_pass(
        header: &VolumeHeader,
        z_tree: &IntervalTree<usize>,
        subs: &mut [Subvolume],
        mut visit: impl FnMut(&mut Subvolume, usize, [i64; 3]),
    ) {
        for z in 0..header.dims[2] as i64 {
            let in_z = z_tree.stab(z);
            if in_z.is_empty() {
                continue;
            }
            let y_tree = IntervalTree::build(
                in_z.iter()
                    .map(|iv| {
                        let s = &subs[iv.payload];
                        Interval {
                            lo: s.origin[1],
                            hi: s.origin[1] + s.dims[1] as i64 - 1,
                            payload: iv.payload,
                        }
                    })
                    .collect(),
            );
            for y in 0..header.dims[1] as i64 {
                let in_y = y_tree.stab(y);
                if in_y.is_empty() {
                    continue;
                }
                let x_tree = IntervalTree::build(
                    in_y.iter()
                        .map(|iv| {
                            let s = &subs[iv.payload];
                            Interval {
                                lo: s.origin[0],
                                hi: s.origin[0] + s.dims[0] as i64 - 1,
                                payload: iv.payload,
                            }
                        })
                        .collect(),
                );
                for x in 0..header.dims[0] as i64 {
                    for iv in x_tree.stab(x) {
                        visit(&mut subs[iv.payload], iv.payload, [x, y, z]);
                    }
                }
            }
        }
    }

    // Collection pass: copy labels and region membership into subvolumes.
    stab_pass(&header, &z_tree, &mut subs, |s, si, p| {
        let li = s.local_index(p);
        s.labels.as_mut_slice()[li] = ids.get(p);
        s.member.as_mut_slice()[li] = region_labels.get(p) == regions[si].region_id;
    });

    for s in subs.iter_mut() {
        s.flood();
    }

    // Write-back pass over the same stabbing structure.
    stab_pass(&header, &z_tree, &mut subs, |s, _, p| {
        let li = s.local_index(p);
        if s.member[li] && s.labels[li] != UNASSIGNED {
            ids.set(p, s.labels[li]);
        }
    });
    Ok(())
}

/// The full four-step assignment.
pub fn assign_branches(
    fg: &BinaryVolume,
    graph: &ProtoVesselGraph,
    ctx: &StorageContext,
) -> Result<(LabelVolume, Vec<CutoffRegion>)> {
    let mut ids = voronoi_map(fg, graph, ctx)?;
    remap_components(&mut ids, graph, ctx)?;
    let (regions, region_labels) = identify_cutoff_regions(fg, &ids, ctx)?;
    flood_cutoff_regions(&mut ids, &regions, &region_labels, ctx)?;
    Ok((ids, regions))
}

#[cfg(test)]
mod tests;
