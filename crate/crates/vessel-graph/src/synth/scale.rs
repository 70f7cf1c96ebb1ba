//! Volume enlargement strategies for scalability and resolution-invariance
//! experiments.

use crate::error::{Result, VesselGraphError};
use crate::memory::StorageContext;
use crate::volume::{BinaryVolume, VoxelState, BINARY_BLOCK_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleStrategy {
    /// Nearest-neighbor upsampling: every voxel becomes a scale³ block and
    /// the spacing shrinks by the scale, so the physical object is
    /// unchanged.
    Resample,
    /// Tile the volume scale times per axis, mirroring every second tile
    /// so the foreground stays continuous across seams. Spacing is kept.
    Mirror,
}

pub fn scale_volume(
    v: &BinaryVolume,
    scale: u32,
    strategy: ScaleStrategy,
    disk_quota_bytes: Option<u64>,
    ctx: &StorageContext,
) -> Result<BinaryVolume> {
    if scale == 0 {
        return Err(VesselGraphError::InvalidInput("scale must be >= 1".into()));
    }
    if scale == 1 {
        return v.duplicate(ctx);
    }
    let d = v.dims();
    let out_dims = [d[0] * scale, d[1] * scale, d[2] * scale];
    let s = v.spacing();
    let out_spacing = match strategy {
        ScaleStrategy::Resample => [
            s[0] / scale as f64,
            s[1] / scale as f64,
            s[2] / scale as f64,
        ],
        ScaleStrategy::Mirror => s,
    };
    if let Some(quota) = disk_quota_bytes {
        let blocks = [
            out_dims[0].div_ceil(32) as u64,
            out_dims[1].div_ceil(32) as u64,
            out_dims[2].div_ceil(32) as u64,
        ];
        let estimated = blocks.iter().product::<u64>() * BINARY_BLOCK_BYTES as u64;
        if estimated > quota {
            return Err(VesselGraphError::InvalidInput(format!(
                "scaled volume needs ~{estimated} bytes on disk, over the quota of {quota}"
            )));
        }
    }
    let mut out = BinaryVolume::create(out_dims, out_spacing, ctx)?;
    let k = scale as i64;
    match strategy {
        ScaleStrategy::Resample => {
            v.for_each_foreground(|p| {
                for dz in 0..k {
                    for dy in 0..k {
                        for dx in 0..k {
                            out.set(
                                [p[0] * k + dx, p[1] * k + dy, p[2] * k + dz],
                                VoxelState::Foreground,
                            );
                        }
                    }
                }
            });
        }
        ScaleStrategy::Mirror => {
            let dims_i = [d[0] as i64, d[1] as i64, d[2] as i64];
            v.for_each_foreground(|p| {
                for tz in 0..k {
                    for ty in 0..k {
                        for tx in 0..k {
                            let m = |t: i64, u: i64, dim: i64| {
                                if t % 2 == 1 {
                                    t * dim + (dim - 1 - u)
                                } else {
                                    t * dim + u
                                }
                            };
                            out.set(
                                [
                                    m(tx, p[0], dims_i[0]),
                                    m(ty, p[1], dims_i[1]),
                                    m(tz, p[2], dims_i[2]),
                                ],
                                VoxelState::Foreground,
                            );
                        }
                    }
                }
            });
        }
    }
    Ok(out)
}
