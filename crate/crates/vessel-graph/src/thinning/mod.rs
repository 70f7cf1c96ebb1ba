//! Topology-preserving iterative thinning.
//!
//! The foreground is eroded to a one-voxel-wide skeleton by directional
//! subiterations. Deletion candidates are kept in an explicit active
//! surface streamed from disk; each subiteration first marks candidates
//! against the untouched volume and then deletes them sequentially in
//! ascending position order with a simplicity re-check, which keeps the
//! result deterministic and prevents mutually dependent deletions from
//! collapsing thin structures.

mod scheduler;
mod simple_point;

pub use scheduler::{DirectionScheduler, FaceDirection};
pub use simple_point::{is_line_end, is_simple, Neighborhood26};

use crate::error::{Result, VesselGraphError};
use crate::labeling::OFFSETS_26;
use crate::memory::StorageContext;
use crate::volume::{
    merge_sorted_surfaces, ActiveSurface, BinaryVolume, PositionWriter, SurfaceBuilder,
    VoxelState, BLOCK_EDGE,
};

#[derive(Debug, Clone, Default)]
pub struct ThinningConfig {
    /// Keep voxels with fewer than two foreground neighbors. Enabled on the
    /// first pipeline iteration so line tips survive; disabled on later
    /// iterations where fixed voxels pin the endpoints instead.
    pub preserve_line_ends: bool,
    /// Linear positions exempt from deletion.
    pub fixed_voxels: Vec<u64>,
}

impl ThinningConfig {
    pub fn first_pass() -> ThinningConfig {
        ThinningConfig {
            preserve_line_ends: true,
            fixed_voxels: Vec::new(),
        }
    }

    pub fn with_fixed(fixed_voxels: Vec<u64>) -> ThinningConfig {
        ThinningConfig {
            preserve_line_ends: false,
            fixed_voxels,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ThinningStats {
    pub subiterations: u64,
    pub per_direction: [u64; 6],
    pub deleted: u64,
    pub candidate_evaluations: u64,
}

/// All foreground voxels with at least one background 6-neighbor, in
/// ascending linear order.
pub fn initial_surface(vol: &BinaryVolume, ctx: &StorageContext) -> Result<ActiveSurface> {
    let mut writer = PositionWriter::create(ctx)?;
    let header = vol.header().clone();
    let d = vol.dims();
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            let mut x = 0i64;
            while x < d[0] as i64 {
                if x % BLOCK_EDGE as i64 == 0 && vol.is_block_vacant_at([x, y, z]) {
                    x += BLOCK_EDGE as i64;
                    continue;
                }
                let p = [x, y, z];
                if vol.get(p).is_foreground() {
                    let open = [
                        [x - 1, y, z],
                        [x + 1, y, z],
                        [x, y - 1, z],
                        [x, y + 1, z],
                        [x, y, z - 1],
                        [x, y, z + 1],
                    ]
                    .iter()
                    .any(|&q| vol.get(q) == VoxelState::Background);
                    if open {
                        writer.push(header.linearize(p))?;
                    }
                }
                x += 1;
            }
        }
    }
    writer.finish()
}

/// One directional thinning pass over the active surface.
///
/// Returns the number of deleted voxels and the next surface: members of
/// `surf` that were not border voxels in `dir` (not considered) plus all
/// foreground 26-neighbors of each deleted voxel. Considered voxels that
/// were not deleted are retired.
pub fn subiteration(
    vol: &mut BinaryVolume,
    dir: FaceDirection,
    surf: &ActiveSurface,
    cfg: &ThinningConfig,
    ctx: &StorageContext,
    stats: &mut ThinningStats,
) -> Result<(u64, ActiveSurface)> {
    let header = vol.header().clone();
    let off = dir.offset();
    let slab_stride = header.dims[0] as u64 * header.dims[1] as u64;

    // Marking: evaluate against the untouched volume, mark candidates
    // ERASED and stash their positions.
    let mut retained = PositionWriter::create(ctx)?;
    let mut candidates = PositionWriter::create(ctx)?;
    {
        let mut reader = surf.reader()?;
        while let Some(pos) = reader.next()? {
            let p = header.delinearize(pos);
            let state = vol.get(p);
            if !state.is_foreground() {
                continue; // deleted in an earlier subiteration
            }
            if vol.get([p[0] + off[0], p[1] + off[1], p[2] + off[2]]) != VoxelState::Background {
                retained.push(pos)?; // not a border voxel in dir: not considered
                continue;
            }
            stats.candidate_evaluations += 1;
            if state == VoxelState::FixedForeground {
                continue;
            }
            let nb = Neighborhood26::gather(vol, p);
            if cfg.preserve_line_ends && is_line_end(&nb) {
                continue;
            }
            if !is_simple(&nb) {
                continue;
            }
            vol.set(p, VoxelState::Erased);
            candidates.push(pos)?;
        }
    }
    let candidates = candidates.finish()?;

    // Sequential deletion in ascending order with a simplicity re-check.
    let mut additions = SurfaceBuilder::new(ctx, ctx.tracker().clone())?;
    let mut deleted = 0u64;
    {
        let mut reader = candidates.reader()?;
        while let Some(pos) = reader.next()? {
            let p = header.delinearize(pos);
            debug_assert_eq!(vol.get(p), VoxelState::Erased);
            let slab = (p[2] as u64).saturating_sub(1);
            additions.advance(slab * slab_stride)?;
            stats.candidate_evaluations += 1;
            let nb = Neighborhood26::gather(vol, p);
            if is_simple(&nb) {
                vol.set(p, VoxelState::Background);
                deleted += 1;
                additions.remove(pos);
                for o in OFFSETS_26 {
                    let q = [p[0] + o[0], p[1] + o[1], p[2] + o[2]];
                    if vol.get(q).is_foreground() {
                        additions.insert(header.linearize(q));
                    }
                }
            } else {
                vol.set(p, VoxelState::Foreground); // retire the mark
            }
        }
    }
    let additions = additions.finish()?;
    let retained = retained.finish()?;
    let next = merge_sorted_surfaces(&retained, &additions, ctx)?;
    Ok((deleted, next))
}

/// Thin the volume in place until no direction can delete anything.
pub fn skeletonize(
    vol: &mut BinaryVolume,
    cfg: &ThinningConfig,
    ctx: &StorageContext,
) -> Result<ThinningStats> {
    let header = vol.header().clone();
    for &pos in &cfg.fixed_voxels {
        if pos >= header.voxel_count() {
            return Err(VesselGraphError::Structural(format!(
                "fixed voxel position {pos} out of range"
            )));
        }
        let p = header.delinearize(pos);
        if !vol.get(p).is_foreground() {
            return Err(VesselGraphError::Structural(format!(
                "fixed voxel {p:?} is not foreground"
            )));
        }
        vol.set(p, VoxelState::FixedForeground);
    }

    let mut stats = ThinningStats::default();
    let mut surf = initial_surface(vol, ctx)?;
    let mut scheduler = DirectionScheduler::new(header.spacing);
    let mut quiet = [false; 6];
    loop {
        let dir = scheduler.next();
        scheduler.advance(dir);
        let (deleted, next) = subiteration(vol, dir, &surf, cfg, ctx, &mut stats)?;
        surf = next;
        stats.subiterations += 1;
        stats.per_direction[dir.index()] += 1;
        stats.deleted += deleted;
        if deleted > 0 {
            quiet = [false; 6];
        } else {
            quiet[dir.index()] = true;
        }
        if quiet.iter().all(|&q| q) {
            break;
        }
    }
    Ok(stats)
}
