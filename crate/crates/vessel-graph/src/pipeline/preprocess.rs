//! Segmentation cleanup: cavity filling and binary median filtering.

use crate::error::Result;
use crate::labeling::{label_components, Connectivity};
use crate::memory::StorageContext;
use crate::volume::{BinaryVolume, VoxelState, BLOCK_EDGE};

/// Fill enclosed background cavities smaller than `min_size` voxels.
/// Background components touching the volume boundary are never filled.
pub fn fill_cavities(
    fg: &BinaryVolume,
    min_size: u64,
    ctx: &StorageContext,
) -> Result<BinaryVolume> {
    let header = fg.header().clone();
    let mut labeling = label_components(
        header.dims,
        header.spacing,
        Connectivity::Six,
        |p| {
            if fg.get(p).is_foreground() {
                None
            } else {
                Some(())
            }
        },
        |_| false,
        ctx,
    )?;

    #[derive(Default)]
    struct Agg {
        count: u64,
        touches_boundary: bool,
    }
    let mut aggs: std::collections::HashMap<u32, Agg> = std::collections::HashMap::new();
    let d = header.dims;
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            for x in 0..d[0] as i64 {
                let p = [x, y, z];
                if let Some(root) = labeling.root_at(p) {
                    let a = aggs.entry(root).or_default();
                    a.count += 1;
                    if x == 0
                        || y == 0
                        || z == 0
                        || x == d[0] as i64 - 1
                        || y == d[1] as i64 - 1
                        || z == d[2] as i64 - 1
                    {
                        a.touches_boundary = true;
                    }
                }
            }
        }
    }

    let mut out = fg.duplicate(ctx)?;
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            for x in 0..d[0] as i64 {
                let p = [x, y, z];
                if let Some(root) = labeling.root_at(p) {
                    let a = &aggs[&root];
                    if !a.touches_boundary && a.count < min_size {
                        out.set(p, VoxelState::Foreground);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Binary median filter: each output voxel takes the majority state of its
/// (2r+1)³ cube, with out-of-range voxels counting as background and exact
/// ties (impossible for odd cubes, kept for clarity) going to foreground.
pub fn median_filter(fg: &BinaryVolume, radius: i64, ctx: &StorageContext) -> Result<BinaryVolume> {
    assert!(radius >= 1, "median radius must be at least 1");
    let header = fg.header().clone();
    let d = header.dims;
    let mut out = BinaryVolume::create(d, header.spacing, ctx)?;
    let cube = (2 * radius + 1).pow(3) as u64;

    // all blocks overlapping the window around a 32-voxel x-run
    let window_vacant = |x0: i64, y: i64, z: i64| -> bool {
        let edge = BLOCK_EDGE as i64;
        let mut bz = ((z - radius).max(0) / edge) * edge;
        while bz <= (z + radius).min(d[2] as i64 - 1) {
            let mut by = ((y - radius).max(0) / edge) * edge;
            while by <= (y + radius).min(d[1] as i64 - 1) {
                let mut bx = ((x0 - radius).max(0) / edge) * edge;
                while bx <= (x0 + edge - 1 + radius).min(d[0] as i64 - 1) {
                    if !fg.is_block_vacant_at([bx, by, bz]) {
                        return false;
                    }
                    bx += edge;
                }
                by += edge;
            }
            bz += edge;
        }
        true
    };

    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            let mut x = 0i64;
            while x < d[0] as i64 {
                if x % BLOCK_EDGE as i64 == 0 && window_vacant(x, y, z) {
                    x += BLOCK_EDGE as i64;
                    continue;
                }
                let mut count = 0u64;
                for dz in -radius..=radius {
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            if fg.get([x + dx, y + dy, z + dz]).is_foreground() {
                                count += 1;
                            }
                        }
                    }
                }
                if count * 2 >= cube {
                    out.set([x, y, z], VoxelState::Foreground);
                }
                x += 1;
            }
        }
    }
    Ok(out)
}
