//! Simple-point test on the 26-neighborhood.
//!
//! A foreground voxel is simple when deleting it leaves both the local
//! foreground 26-component structure and the local background 6-component
//! structure intact. Both conditions are decided by direct component
//! counting inside the 3x3x3 neighborhood: the foreground of the punctured
//! cube must form exactly one 26-component, and exactly one 6-component of
//! background within the 18-neighborhood may touch the six face neighbors
//! (zero would create a cavity, two or more would be merged through the
//! center).

use crate::volume::BinaryVolume;

const CENTER: usize = 13;
const CENTER_BIT: u32 = 1 << CENTER;


const fn coords(i: usize) -> [i64; 3] {
    [
        (i % 3) as i64 - 1,
        ((i / 3) % 3) as i64 - 1,
        (i / 9) as i64 - 1,
    ]
}

const fn build_adjacency(six_only: bool) -> [u32; 27] {
    let mut table = [0u32; 27];
    let mut i = 0;
    while i < 27 {
        let a = coords(i);
        let mut j = 0;
        while j < 27 {
            if i != j {
                let b = coords(j);
                let dx = (a[0] - b[0]).abs();
                let dy = (a[1] - b[1]).abs();
                let dz = (a[2] - b[2]).abs();
                let adjacent = if six_only {
                    dx + dy + dz == 1
                } else {
                    dx <= 1 && dy <= 1 && dz <= 1
                };
                if adjacent {
                    table[i] |= 1 << j;
                }
            }
            j += 1;
        }
        i += 1;
    }
    table
}

const fn build_mask(max_nonzero: u32, min_nonzero: u32) -> u32 {
    let mut mask = 0u32;
    let mut i = 0;
    while i < 27 {
        let c = coords(i);
        let nz = (c[0] != 0) as u32 + (c[1] != 0) as u32 + (c[2] != 0) as u32;
        if nz >= min_nonzero && nz <= max_nonzero {
            mask |= 1 << i;
        }
        i += 1;
    }
    mask
}

static ADJ_26: [u32; 27] = build_adjacency(false);
static ADJ_6: [u32; 27] = build_adjacency(true);
/// Face and edge neighbors (one or two nonzero offset coordinates).
const N18_MASK: u32 = build_mask(2, 1);
/// The six face neighbors.
const FACE_MASK: u32 = build_mask(1, 1);

/// Occupancy of a 3x3x3 cube centered on a foreground voxel, one bit per
/// cell in (dx + 3 dy + 9 dz) order.
#[derive(Debug, Clone, Copy)]
pub struct Neighborhood26 {
    mask: u32,
}

impl Neighborhood26 {
    /// Gather from a volume; any foreground state occupies.
    pub fn gather(vol: &BinaryVolume, p: [i64; 3]) -> Neighborhood26 {
        debug_assert!(vol.get(p).is_foreground(), "center must be foreground");
        Neighborhood26::from_fn(|off| vol.get([p[0] + off[0], p[1] + off[1], p[2] + off[2]]).is_foreground())
    }

    pub fn from_fn(mut occupied: impl FnMut([i64; 3]) -> bool) -> Neighborhood26 {
        let mut mask = CENTER_BIT;
        for i in 0..27 {
            if i != CENTER && occupied(coords(i)) {
                mask |= 1 << i;
            }
        }
        Neighborhood26 { mask }
    }

    /// Number of foreground voxels among the 26 neighbors.
    #[inline]
    pub fn neighbor_count(&self) -> u32 {
        (self.mask & !CENTER_BIT).count_ones()
    }
}

/// Flood a bit set from `seed` through `domain` using the given adjacency.
#[inline]
fn flood(seed: u32, domain: u32, adjacency: &[u32; 27]) -> u32 {
    let mut comp = seed & domain;
    loop {
        let mut grown = comp;
        let mut rest = comp;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            grown |= adjacency[i] & domain;
        }
        if grown == comp {
            return comp;
        }
        comp = grown;
    }
}

/// True iff the center voxel has fewer than two foreground neighbors.
pub fn is_line_end(nb: &Neighborhood26) -> bool {
    nb.neighbor_count() < 2
}

/// True iff deleting the center voxel preserves topology.
pub fn is_simple(nb: &Neighborhood26) -> bool {
    // Foreground of the punctured cube must be one 26-component.
    let fg = nb.mask & !CENTER_BIT;
    if fg == 0 {
        return false; // isolated voxel, its component would vanish
    }
    let seed = 1u32 << fg.trailing_zeros();
    if flood(seed, fg, &ADJ_26) != fg {
        return false;
    }
    // Exactly one 6-component of background in the 18-neighborhood may
    // touch the face neighbors.
    let bg18 = !nb.mask & N18_MASK;
    let bg_faces = bg18 & FACE_MASK;
    if bg_faces == 0 {
        return false; // deletion would open a cavity
    }
    let seed = 1u32 << bg_faces.trailing_zeros();
    let comp = flood(seed, bg18, &ADJ_6);
    bg_faces & !comp == 0
}
