//! Disk-backed blocked volume storage.
//!
//! Volumes are stored as 32x32x32 voxel blocks in lexicographic block order
//! (x fastest). Binary occupancy volumes pack 2 bits per voxel (2048 bytes
//! per block), label volumes store a little-endian u32 per voxel. Blocks are
//! paged through a capped, tracker-charged cache so resident memory stays
//! within the configured budget regardless of volume size.

mod block_file;
mod surface;

pub use surface::{
    merge_sorted_surfaces, surface_merge, ActiveSurface, PositionReader, PositionWriter,
    SurfaceBuilder,
};

use std::cell::RefCell;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, VesselGraphError};
use crate::memory::StorageContext;
use block_file::BlockFile;

pub const BLOCK_EDGE: u32 = 32;
pub const BLOCK_VOXELS: usize = (BLOCK_EDGE * BLOCK_EDGE * BLOCK_EDGE) as usize;
pub const BINARY_BLOCK_BYTES: usize = BLOCK_VOXELS / 4;
pub const LABEL_BLOCK_BYTES: usize = BLOCK_VOXELS * 4;

/// Sentinel for voxels not assigned to any edge.
pub const UNASSIGNED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelKind {
    Binary2Bit,
    Label,
}

impl VoxelKind {
    pub fn block_bytes(self) -> usize {
        match self {
            VoxelKind::Binary2Bit => BINARY_BLOCK_BYTES,
            VoxelKind::Label => LABEL_BLOCK_BYTES,
        }
    }

    fn token(self) -> &'static str {
        match self {
            VoxelKind::Binary2Bit => "binary2bit",
            VoxelKind::Label => "label",
        }
    }

    fn fill_byte(self) -> u8 {
        match self {
            VoxelKind::Binary2Bit => 0x00, // all BACKGROUND
            VoxelKind::Label => 0xFF,      // all UNASSIGNED
        }
    }
}

/// Voxel state of a binary occupancy volume, packed into 2 bits.
///
/// `FixedForeground` voxels are exempt from thinning deletion. `Erased` is a
/// transient within-pass deletion mark; no voxel stays `Erased` after a
/// completed subiteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum VoxelState {
    Background = 0,
    Foreground = 1,
    FixedForeground = 2,
    Erased = 3,
}

impl VoxelState {
    #[inline]
    pub fn from_bits(bits: u8) -> VoxelState {
        match bits & 0b11 {
            0 => VoxelState::Background,
            1 => VoxelState::Foreground,
            2 => VoxelState::FixedForeground,
            _ => VoxelState::Erased,
        }
    }

    /// All states except `Background` occupy space.
    #[inline]
    pub fn is_foreground(self) -> bool {
        self != VoxelState::Background
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: [u32; 3],
    pub spacing: [f64; 3],
    pub block_edge: u32,
    pub kind: VoxelKind,
}

impl VolumeHeader {
    pub fn new(dims: [u32; 3], spacing: [f64; 3], kind: VoxelKind) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(VesselGraphError::InvalidInput(
                "volume dimensions must be positive".into(),
            ));
        }
        if dims.iter().any(|&d| d > 1 << 20)
            || dims.iter().map(|&d| d as u128).product::<u128>() > 1 << 42
        {
            return Err(VesselGraphError::InvalidInput(format!(
                "volume dimensions {dims:?} overflow the addressable space"
            )));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VesselGraphError::InvalidInput(
                "voxel spacing must be strictly positive".into(),
            ));
        }
        Ok(VolumeHeader {
            dims,
            spacing,
            block_edge: BLOCK_EDGE,
            kind,
        })
    }

    /// Blocks per axis (ceiling division).
    pub fn blocks_per_axis(&self) -> [u32; 3] {
        [
            self.dims[0].div_ceil(BLOCK_EDGE),
            self.dims[1].div_ceil(BLOCK_EDGE),
            self.dims[2].div_ceil(BLOCK_EDGE),
        ]
    }

    pub fn block_count(&self) -> usize {
        let b = self.blocks_per_axis();
        b[0] as usize * b[1] as usize * b[2] as usize
    }

    pub fn voxel_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    #[inline]
    pub fn in_range(&self, p: [i64; 3]) -> bool {
        (0..3).all(|i| p[i] >= 0 && p[i] < self.dims[i] as i64)
    }

    /// Row-major linear index (x fastest).
    #[inline]
    pub fn linearize(&self, p: [i64; 3]) -> u64 {
        debug_assert!(self.in_range(p));
        p[0] as u64 + self.dims[0] as u64 * (p[1] as u64 + self.dims[1] as u64 * p[2] as u64)
    }

    #[inline]
    pub fn delinearize(&self, lin: u64) -> [i64; 3] {
        let x = lin % self.dims[0] as u64;
        let rest = lin / self.dims[0] as u64;
        let y = rest % self.dims[1] as u64;
        let z = rest / self.dims[1] as u64;
        [x as i64, y as i64, z as i64]
    }

    /// Physical position of a voxel (grid-point convention).
    #[inline]
    pub fn physical(&self, p: [i64; 3]) -> [f64; 3] {
        [
            p[0] as f64 * self.spacing[0],
            p[1] as f64 * self.spacing[1],
            p[2] as f64 * self.spacing[2],
        ]
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Block index in lexicographic order (x fastest) plus offset within
    /// the block. Within a block voxel `i = lx + 32*(ly + 32*lz)` occupies
    /// bits `[2i, 2i+2)` (binary) or bytes `[4i, 4i+4)` (label),
    /// little-endian within bytes.
    #[inline]
    fn block_of(&self, p: [i64; 3]) -> (usize, usize) {
        let b = self.blocks_per_axis();
        let (bx, by, bz) = (
            p[0] as u32 / BLOCK_EDGE,
            p[1] as u32 / BLOCK_EDGE,
            p[2] as u32 / BLOCK_EDGE,
        );
        let (lx, ly, lz) = (
            p[0] as u32 % BLOCK_EDGE,
            p[1] as u32 % BLOCK_EDGE,
            p[2] as u32 % BLOCK_EDGE,
        );
        let bidx = (bx + b[0] * (by + b[1] * bz)) as usize;
        let within = (lx + BLOCK_EDGE * (ly + BLOCK_EDGE * lz)) as usize;
        (bidx, within)
    }

    fn header_line(&self) -> String {
        format!(
            "VGV1 {} {} {} {} {} {} {}\n",
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.spacing[0],
            self.spacing[1],
            self.spacing[2],
            self.kind.token()
        )
    }

    fn parse_header_line(line: &str, path: &Path) -> Result<VolumeHeader> {
        let bad = |reason: &str| VesselGraphError::BadHeader {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut it = line.trim_end().split(' ');
        if it.next() != Some("VGV1") {
            return Err(bad("missing VGV1 magic"));
        }
        let mut next_u32 = |name: &str| -> Result<u32> {
            it.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(&format!("invalid {name}")))
        };
        let dims = [next_u32("dx")?, next_u32("dy")?, next_u32("dz")?];
        let mut it2 = line.trim_end().split(' ').skip(4);
        let mut next_f64 = |name: &str| -> Result<f64> {
            it2.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad(&format!("invalid {name}")))
        };
        let spacing = [next_f64("sx")?, next_f64("sy")?, next_f64("sz")?];
        let kind = match it2.next() {
            Some("binary2bit") => VoxelKind::Binary2Bit,
            Some("label") => VoxelKind::Label,
            _ => return Err(bad("unknown voxel kind")),
        };
        VolumeHeader::new(dims, spacing, kind).map_err(|e| bad(&e.to_string()))
    }
}

/// A one-voxel-thick slab streamed out of a volume.
pub struct Slab<'a, T> {
    /// Index along the streamed axis.
    pub index: u32,
    /// Extents of the two perpendicular axes, in ascending axis order.
    pub perp_dims: [u32; 2],
    /// Voxel values, first perpendicular axis fastest.
    pub data: &'a [T],
}

struct Store {
    header: VolumeHeader,
    blocks: RefCell<BlockFile>,
}

impl Store {
    fn create(header: VolumeHeader, path: PathBuf, ctx: &StorageContext) -> Result<Store> {
        let line = header.header_line();
        let blocks = BlockFile::create(
            path,
            line.as_bytes(),
            header.block_count(),
            header.kind.block_bytes(),
            header.kind.fill_byte(),
            ctx.volume_cache_cap(),
            ctx.tracker().clone(),
        )?;
        Ok(Store {
            header,
            blocks: RefCell::new(blocks),
        })
    }

    fn open(path: &Path, kind: VoxelKind, ctx: &StorageContext) -> Result<Store> {
        let file = File::open(path).map_err(|e| VesselGraphError::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| VesselGraphError::io(path, e))?;
        let header = VolumeHeader::parse_header_line(&line, path)?;
        if header.kind != kind {
            return Err(VesselGraphError::BadHeader {
                path: path.to_path_buf(),
                reason: format!("expected {} volume", kind.token()),
            });
        }
        let blocks = BlockFile::open(
            path.to_path_buf(),
            line.len() as u64,
            header.block_count(),
            header.kind.block_bytes(),
            header.kind.fill_byte(),
            ctx.volume_cache_cap(),
            ctx.tracker().clone(),
        )?;
        Ok(Store {
            header,
            blocks: RefCell::new(blocks),
        })
    }

    fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| VesselGraphError::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(self.header.header_line().as_bytes())
            .map_err(|e| VesselGraphError::io(path, e))?;
        let mut store = self.blocks.borrow_mut();
        let mut buf = vec![0u8; self.header.kind.block_bytes()];
        for bidx in 0..self.header.block_count() {
            store.read_block_into(bidx, &mut buf)?;
            out.write_all(&buf).map_err(|e| VesselGraphError::io(path, e))?;
        }
        out.flush().map_err(|e| VesselGraphError::io(path, e))
    }
}

/// 2-bit-per-voxel blocked occupancy volume.
pub struct BinaryVolume {
    store: Store,
}

impl BinaryVolume {
    pub fn create(dims: [u32; 3], spacing: [f64; 3], ctx: &StorageContext) -> Result<BinaryVolume> {
        let header = VolumeHeader::new(dims, spacing, VoxelKind::Binary2Bit)?;
        let path = ctx.scratch_file("binvol");
        Ok(BinaryVolume {
            store: Store::create(header, path, ctx)?,
        })
    }

    pub fn open(path: &Path, ctx: &StorageContext) -> Result<BinaryVolume> {
        Ok(BinaryVolume {
            store: Store::open(path, VoxelKind::Binary2Bit, ctx)?,
        })
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.store.header
    }

    pub fn dims(&self) -> [u32; 3] {
        self.store.header.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.store.header.spacing
    }

    /// Out-of-range reads return `Background`.
    #[inline]
    pub fn get(&self, p: [i64; 3]) -> VoxelState {
        if !self.store.header.in_range(p) {
            return VoxelState::Background;
        }
        let (bidx, within) = self.store.header.block_of(p);
        let mut blocks = self.store.blocks.borrow_mut();
        let byte = blocks.byte_at(bidx, within / 4);
        VoxelState::from_bits(byte >> (2 * (within % 4)))
    }

    #[inline]
    pub fn get_lin(&self, lin: u64) -> VoxelState {
        self.get(self.store.header.delinearize(lin))
    }

    #[inline]
    pub fn is_foreground(&self, p: [i64; 3]) -> bool {
        self.get(p).is_foreground()
    }

    /// Panics when out of range.
    pub fn set(&mut self, p: [i64; 3], state: VoxelState) {
        assert!(self.store.header.in_range(p), "voxel {p:?} out of range");
        let (bidx, within) = self.store.header.block_of(p);
        let shift = 2 * (within % 4);
        let mut blocks = self.store.blocks.borrow_mut();
        blocks.update_byte(bidx, within / 4, |b| {
            (b & !(0b11 << shift)) | ((state as u8) << shift)
        });
    }

    pub fn set_lin(&mut self, lin: u64, state: VoxelState) {
        self.set(self.store.header.delinearize(lin), state);
    }

    /// True when the block holding `p` has never been touched; such space
    /// reads as all-background without any i/o.
    #[inline]
    pub fn is_block_vacant_at(&self, p: [i64; 3]) -> bool {
        let (bidx, _) = self.store.header.block_of(p);
        self.store.blocks.borrow().is_vacant(bidx)
    }

    pub fn count_foreground(&self) -> u64 {
        let mut count = 0u64;
        let d = self.dims();
        for z in 0..d[2] as i64 {
            for y in 0..d[1] as i64 {
                let mut x = 0i64;
                while x < d[0] as i64 {
                    if x % BLOCK_EDGE as i64 == 0 && self.is_block_vacant_at([x, y, z]) {
                        x += BLOCK_EDGE as i64;
                        continue;
                    }
                    if self.get([x, y, z]).is_foreground() {
                        count += 1;
                    }
                    x += 1;
                }
            }
        }
        count
    }

    /// Visit every foreground voxel in ascending linear order.
    pub fn for_each_foreground(&self, mut f: impl FnMut([i64; 3])) {
        let d = self.dims();
        for z in 0..d[2] as i64 {
            for y in 0..d[1] as i64 {
                let mut x = 0i64;
                while x < d[0] as i64 {
                    if x % BLOCK_EDGE as i64 == 0 && self.is_block_vacant_at([x, y, z]) {
                        x += BLOCK_EDGE as i64;
                        continue;
                    }
                    if self.get([x, y, z]).is_foreground() {
                        f([x, y, z]);
                    }
                    x += 1;
                }
            }
        }
    }

    /// Stream one-voxel-thick slabs along `axis` in ascending order. The
    /// slab buffer holds raw state values and is reused between calls, so
    /// at most one slab is resident at a time.
    pub fn for_each_slab(
        &self,
        axis: usize,
        mut f: impl FnMut(&Slab<'_, u8>) -> Result<()>,
    ) -> Result<()> {
        assert!(axis < 3, "axis must be 0, 1 or 2");
        let d = self.dims();
        let perp: [usize; 2] = match axis {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        };
        let perp_dims = [d[perp[0]], d[perp[1]]];
        let mut buf = crate::memory::TrackedVec::new(
            self.store.blocks.borrow().tracker(),
            (perp_dims[0] as usize) * (perp_dims[1] as usize),
            0u8,
        );
        for s in 0..d[axis] as i64 {
            {
                let data = buf.as_mut_slice();
                let mut i = 0;
                for v in 0..perp_dims[1] as i64 {
                    for u in 0..perp_dims[0] as i64 {
                        let mut p = [0i64; 3];
                        p[axis] = s;
                        p[perp[0]] = u;
                        p[perp[1]] = v;
                        data[i] = self.get(p) as u8;
                        i += 1;
                    }
                }
            }
            f(&Slab {
                index: s as u32,
                perp_dims,
                data: buf.as_slice(),
            })?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.store.save(path)
    }

    /// Deep copy into a fresh scratch-backed volume.
    pub fn duplicate(&self, ctx: &StorageContext) -> Result<BinaryVolume> {
        let out = BinaryVolume::create(self.dims(), self.spacing(), ctx)?;
        {
            let mut src = self.store.blocks.borrow_mut();
            let mut dst = out.store.blocks.borrow_mut();
            let mut buf = vec![0u8; BINARY_BLOCK_BYTES];
            for bidx in 0..self.store.header.block_count() {
                if src.is_vacant(bidx) {
                    continue;
                }
                src.read_block_into(bidx, &mut buf)?;
                dst.write_block(bidx, &buf)?;
            }
        }
        Ok(out)
    }

    /// Import a raw volume: one byte per voxel, nonzero = foreground,
    /// row-major (x fastest).
    pub fn import_raw(
        path: &Path,
        dims: [u32; 3],
        spacing: [f64; 3],
        ctx: &StorageContext,
    ) -> Result<BinaryVolume> {
        let file = File::open(path).map_err(|e| VesselGraphError::io(path, e))?;
        let expected = dims.iter().map(|&d| d as u64).product::<u64>();
        let meta = file.metadata().map_err(|e| VesselGraphError::io(path, e))?;
        if meta.len() != expected {
            return Err(VesselGraphError::InvalidInput(format!(
                "raw volume {} has {} bytes, expected {} for dims {:?}",
                path.display(),
                meta.len(),
                expected,
                dims
            )));
        }
        let mut vol = BinaryVolume::create(dims, spacing, ctx)?;
        let mut reader = BufReader::new(file);
        let mut row = vec![0u8; dims[0] as usize];
        for z in 0..dims[2] as i64 {
            for y in 0..dims[1] as i64 {
                reader
                    .read_exact(&mut row)
                    .map_err(|e| VesselGraphError::io(path, e))?;
                for (x, &b) in row.iter().enumerate() {
                    if b != 0 {
                        vol.set([x as i64, y, z], VoxelState::Foreground);
                    }
                }
            }
        }
        Ok(vol)
    }

    /// Number of blocks loaded from disk or materialized so far.
    pub fn block_loads(&self) -> u64 {
        self.store.blocks.borrow().loads()
    }
}

/// Per-voxel u32 edge-label volume with an `UNASSIGNED` sentinel.
pub struct LabelVolume {
    store: Store,
}

impl LabelVolume {
    pub fn create(dims: [u32; 3], spacing: [f64; 3], ctx: &StorageContext) -> Result<LabelVolume> {
        let header = VolumeHeader::new(dims, spacing, VoxelKind::Label)?;
        let path = ctx.scratch_file("labelvol");
        Ok(LabelVolume {
            store: Store::create(header, path, ctx)?,
        })
    }

    pub fn open(path: &Path, ctx: &StorageContext) -> Result<LabelVolume> {
        Ok(LabelVolume {
            store: Store::open(path, VoxelKind::Label, ctx)?,
        })
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.store.header
    }

    pub fn dims(&self) -> [u32; 3] {
        self.store.header.dims
    }

    /// Out-of-range reads return `UNASSIGNED`.
    #[inline]
    pub fn get(&self, p: [i64; 3]) -> u32 {
        if !self.store.header.in_range(p) {
            return UNASSIGNED;
        }
        let (bidx, within) = self.store.header.block_of(p);
        let mut blocks = self.store.blocks.borrow_mut();
        blocks.u32_at(bidx, within)
    }

    pub fn set(&mut self, p: [i64; 3], label: u32) {
        assert!(self.store.header.in_range(p), "voxel {p:?} out of range");
        let (bidx, within) = self.store.header.block_of(p);
        let mut blocks = self.store.blocks.borrow_mut();
        blocks.set_u32(bidx, within, label);
    }

    #[inline]
    pub fn is_block_vacant_at(&self, p: [i64; 3]) -> bool {
        let (bidx, _) = self.store.header.block_of(p);
        self.store.blocks.borrow().is_vacant(bidx)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.store.save(path)
    }

    pub fn block_loads(&self) -> u64 {
        self.store.blocks.borrow().loads()
    }
}

/// Iterate volume coordinates block by block (lexicographic block order,
/// x fastest within each block) for access locality.
pub fn for_each_voxel_blockwise(dims: [u32; 3], mut f: impl FnMut([i64; 3])) {
    let nb = [
        dims[0].div_ceil(BLOCK_EDGE),
        dims[1].div_ceil(BLOCK_EDGE),
        dims[2].div_ceil(BLOCK_EDGE),
    ];
    for bz in 0..nb[2] {
        for by in 0..nb[1] {
            for bx in 0..nb[0] {
                let x0 = (bx * BLOCK_EDGE) as i64;
                let y0 = (by * BLOCK_EDGE) as i64;
                let z0 = (bz * BLOCK_EDGE) as i64;
                let x1 = ((bx + 1) * BLOCK_EDGE).min(dims[0]) as i64;
                let y1 = ((by + 1) * BLOCK_EDGE).min(dims[1]) as i64;
                let z1 = ((bz + 1) * BLOCK_EDGE).min(dims[2]) as i64;
                for z in z0..z1 {
                    for y in y0..y1 {
                        for x in x0..x1 {
                            f([x, y, z]);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests;
