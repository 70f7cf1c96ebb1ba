//! Topology-preserving surface noise.
//!
//! Random surface voxels (foreground with a background face neighbor, or
//! background with a foreground face neighbor) are flipped one at a time,
//! but only when the flip passes the simple-point test, so the object's
//! topology never changes. The generator is ChaCha8 seeded from the given
//! seed, which makes runs reproducible across platforms.

use std::collections::HashMap;

use log::warn;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VesselGraphError};
use crate::memory::StorageContext;
use crate::thinning::{is_simple, Neighborhood26};
use crate::volume::{BinaryVolume, VoxelState};

pub struct NoiseOutcome {
    pub volume: BinaryVolume,
    pub requested_flips: u64,
    pub accepted_flips: u64,
}

/// Dynamic uniform-samplable set of surface positions.
struct SurfaceSet {
    items: Vec<u64>,
    index_of: HashMap<u64, usize>,
}

impl SurfaceSet {
    fn insert(&mut self, pos: u64) {
        if !self.index_of.contains_key(&pos) {
            self.index_of.insert(pos, self.items.len());
            self.items.push(pos);
        }
    }

    fn remove(&mut self, pos: u64) {
        if let Some(i) = self.index_of.remove(&pos) {
            let last = self.items.pop().unwrap();
            if i < self.items.len() {
                self.items[i] = last;
                self.index_of.insert(last, i);
            }
        }
    }

    fn len(&self) -> usize {
        self.items.len()
    }
}

fn is_surface(vol: &BinaryVolume, p: [i64; 3]) -> bool {
    if !vol.header().in_range(p) {
        return false;
    }
    let fg = vol.get(p).is_foreground();
    let neighbors = [
        [p[0] - 1, p[1], p[2]],
        [p[0] + 1, p[1], p[2]],
        [p[0], p[1] - 1, p[2]],
        [p[0], p[1] + 1, p[2]],
        [p[0], p[1], p[2] - 1],
        [p[0], p[1], p[2] + 1],
    ];
    neighbors
        .iter()
        .any(|&q| vol.get(q).is_foreground() != fg)
}

/// Apply surface noise until `floor(level * initial surface voxel count)`
/// flips were accepted, drawing candidates with replacement. Gives up with
/// a warning after 100x that many attempts.
pub fn add_surface_noise(
    v: &BinaryVolume,
    level: f64,
    seed: u64,
    ctx: &StorageContext,
) -> Result<NoiseOutcome> {
    if !(0.0..=1.0).contains(&level) {
        return Err(VesselGraphError::InvalidInput(
            "noise level must be within [0, 1]".into(),
        ));
    }
    let mut out = v.duplicate(ctx)?;
    let header = out.header().clone();
    let mut surface = SurfaceSet {
        items: Vec::new(),
        index_of: HashMap::new(),
    };
    let d = header.dims;
    for z in 0..d[2] as i64 {
        for y in 0..d[1] as i64 {
            for x in 0..d[0] as i64 {
                if is_surface(&out, [x, y, z]) {
                    surface.insert(header.linearize([x, y, z]));
                }
            }
        }
    }
    let target = (level * surface.len() as f64).floor() as u64;
    let mut accepted = 0u64;
    let mut attempts = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while accepted < target {
        attempts += 1;
        if attempts > target.saturating_mul(100) {
            warn!(
                "surface noise reached only {accepted} of {target} flips after {attempts} attempts"
            );
            break;
        }
        if surface.len() == 0 {
            warn!("surface exhausted after {accepted} of {target} flips");
            break;
        }
        let pos = surface.items[rng.random_range(0..surface.len())];
        let p = header.delinearize(pos);
        let was_fg = out.get(p).is_foreground();
        // the simple-point test decides both directions: removing a simple
        // foreground voxel or adding a voxel that would be simple
        // afterwards leaves the topology unchanged
        let nb = Neighborhood26::from_fn(|off| {
            out.get([p[0] + off[0], p[1] + off[1], p[2] + off[2]])
                .is_foreground()
        });
        if !is_simple(&nb) {
            continue;
        }
        out.set(
            p,
            if was_fg {
                VoxelState::Background
            } else {
                VoxelState::Foreground
            },
        );
        accepted += 1;
        // surface membership can change for the voxel and its face
        // neighbors only
        let affected = [
            p,
            [p[0] - 1, p[1], p[2]],
            [p[0] + 1, p[1], p[2]],
            [p[0], p[1] - 1, p[2]],
            [p[0], p[1] + 1, p[2]],
            [p[0], p[1], p[2] - 1],
            [p[0], p[1], p[2] + 1],
        ];
        for q in affected {
            if !header.in_range(q) {
                continue;
            }
            let lin = header.linearize(q);
            if is_surface(&out, q) {
                surface.insert(lin);
            } else {
                surface.remove(lin);
            }
        }
    }
    Ok(NoiseOutcome {
        volume: out,
        requested_flips: target,
        accepted_flips: accepted,
    })
}
