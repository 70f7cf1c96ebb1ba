//! Streaming connected component labeling over blocked volumes.
//!
//! A single ascending pass assigns provisional labels, recording merges in a
//! union-find keyed by provisional ids whenever two already-labeled voxels
//! with equal keys touch. Per-voxel labels go into a scratch label volume so
//! later passes can resolve them to component roots; callers fold their
//! per-provisional aggregates by root afterwards.

use crate::error::Result;
use crate::memory::StorageContext;
use crate::volume::{LabelVolume, BLOCK_EDGE, UNASSIGNED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    /// Offsets to already-visited neighbors in an ascending row-major scan.
    fn prior_offsets(self) -> &'static [[i64; 3]] {
        const PRIOR_6: [[i64; 3]; 3] = [[-1, 0, 0], [0, -1, 0], [0, 0, -1]];
        const PRIOR_26: [[i64; 3]; 13] = [
            [-1, -1, -1],
            [0, -1, -1],
            [1, -1, -1],
            [-1, 0, -1],
            [0, 0, -1],
            [1, 0, -1],
            [-1, 1, -1],
            [0, 1, -1],
            [1, 1, -1],
            [-1, -1, 0],
            [0, -1, 0],
            [1, -1, 0],
            [-1, 0, 0],
        ];
        match self {
            Connectivity::Six => &PRIOR_6,
            Connectivity::TwentySix => &PRIOR_26,
        }
    }

    pub fn offsets(self) -> &'static [[i64; 3]] {
        const OFF_6: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        match self {
            Connectivity::Six => &OFF_6,
            Connectivity::TwentySix => &OFFSETS_26,
        }
    }
}

pub const OFFSETS_26: [[i64; 3]; 26] = {
    let mut offs = [[0i64; 3]; 26];
    let mut i = 0;
    let mut dz = -1i64;
    while dz <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dx = -1i64;
            while dx <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    offs[i] = [dx, dy, dz];
                    i += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    offs
};

/// Union-find over provisional component ids; roots are minimal ids, so
/// resolution is deterministic.
pub struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new() -> UnionFind {
        UnionFind { parent: Vec::new() }
    }

    pub fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        // smaller id wins
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
    }
}

impl Default for UnionFind {
    fn default() -> Self {
        UnionFind::new()
    }
}

/// Result of a labeling pass: per-voxel provisional labels live in the
/// returned scratch volume; `uf.find` maps them to component roots.
pub struct Labeling {
    pub labels: LabelVolume,
    pub uf: UnionFind,
}

impl Labeling {
    pub fn root_at(&mut self, p: [i64; 3]) -> Option<u32> {
        let l = self.labels.get(p);
        if l == UNASSIGNED {
            None
        } else {
            Some(self.uf.find(l))
        }
    }
}

/// A key function: `Some(k)` makes the voxel labelable; voxels merge into
/// one component iff they are adjacent under `conn` and their keys are
/// equal. `vacant_hint(x0, y, z)` may return true when the whole 32-voxel
/// x-run starting at x0 is known to carry no keys, allowing the scan to
/// skip it.
pub fn label_components<K: Eq + Copy>(
    dims: [u32; 3],
    spacing: [f64; 3],
    conn: Connectivity,
    mut key_of: impl FnMut([i64; 3]) -> Option<K>,
    mut vacant_hint: impl FnMut([i64; 3]) -> bool,
    ctx: &StorageContext,
) -> Result<Labeling> {
    let mut labels = LabelVolume::create(dims, spacing, ctx)?;
    let mut uf = UnionFind::new();
    let priors = conn.prior_offsets();
    let edge = BLOCK_EDGE as i64;

    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            let mut x = 0i64;
            while x < dims[0] as i64 {
                if x % edge == 0 && vacant_hint([x, y, z]) {
                    x += edge;
                    continue;
                }
                let p = [x, y, z];
                let Some(key) = key_of(p) else {
                    x += 1;
                    continue;
                };
                let mut assigned: Option<u32> = None;
                for off in priors {
                    let q = [p[0] + off[0], p[1] + off[1], p[2] + off[2]];
                    if q[0] < 0
                        || q[1] < 0
                        || q[2] < 0
                        || q[0] >= dims[0] as i64
                        || q[1] >= dims[1] as i64
                        || q[2] >= dims[2] as i64
                    {
                        continue;
                    }
                    if key_of(q) != Some(key) {
                        continue;
                    }
                    let ql = labels.get(q);
                    debug_assert_ne!(ql, UNASSIGNED, "prior voxel with key must be labeled");
                    match assigned {
                        None => assigned = Some(ql),
                        Some(a) => uf.union(a, ql),
                    }
                }
                let label = match assigned {
                    Some(l) => l,
                    None => uf.make(),
                };
                labels.set(p, label);
                x += 1;
            }
        }
    }
    Ok(Labeling { labels, uf })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{BinaryVolume, VoxelState};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::collections::{HashMap, HashSet, VecDeque};

    fn ctx() -> (tempfile::TempDir, StorageContext) {
        let dir = tempfile::tempdir().unwrap();
        let ctx = StorageContext::new(dir.path(), 32 * 1024 * 1024);
        (dir, ctx)
    }

    /// Plain BFS component count oracle.
    fn bfs_components(fg: &HashSet<[i64; 3]>, conn: Connectivity) -> usize {
        let mut seen = HashSet::new();
        let mut count = 0;
        for &start in fg {
            if seen.contains(&start) {
                continue;
            }
            count += 1;
            let mut q = VecDeque::from([start]);
            seen.insert(start);
            while let Some(p) = q.pop_front() {
                for off in conn.offsets() {
                    let n = [p[0] + off[0], p[1] + off[1], p[2] + off[2]];
                    if fg.contains(&n) && seen.insert(n) {
                        q.push_back(n);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn random_volume_component_counts_match_bfs() {
        let (_d, ctx) = ctx();
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dims = [24u32, 24, 24];
            let mut vol = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
            let mut set = HashSet::new();
            for _ in 0..900 {
                let p = [
                    rng.random_range(0..24) as i64,
                    rng.random_range(0..24) as i64,
                    rng.random_range(0..24) as i64,
                ];
                vol.set(p, VoxelState::Foreground);
                set.insert(p);
            }
            for conn in [Connectivity::Six, Connectivity::TwentySix] {
                let mut labeling = label_components(
                    dims,
                    [1.0; 3],
                    conn,
                    |p| if vol.is_foreground(p) { Some(()) } else { None },
                    |p| vol.is_block_vacant_at(p),
                    &ctx,
                )
                .unwrap();
                let mut roots = HashSet::new();
                for &p in &set {
                    roots.insert(labeling.root_at(p).unwrap());
                }
                assert_eq!(roots.len(), bfs_components(&set, conn), "seed {seed}");
            }
        }
    }

    #[test]
    fn keyed_labeling_separates_equal_ids_only() {
        let (_d, ctx) = ctx();
        let dims = [8u32, 1, 1];
        // keys along x: 1 1 2 2 2 _ 1 1 -> components {0,1}, {2,3,4}, {6,7}
        let keys = [
            Some(1u32),
            Some(1),
            Some(2),
            Some(2),
            Some(2),
            None,
            Some(1),
            Some(1),
        ];
        let mut labeling = label_components(
            dims,
            [1.0; 3],
            Connectivity::TwentySix,
            |p| keys[p[0] as usize],
            |_| false,
            &ctx,
        )
        .unwrap();
        let mut groups: HashMap<u32, Vec<i64>> = HashMap::new();
        for x in 0..8 {
            if let Some(r) = labeling.root_at([x, 0, 0]) {
                groups.entry(r).or_default().push(x);
            }
        }
        let mut parts: Vec<Vec<i64>> = groups.into_values().collect();
        parts.sort();
        assert_eq!(parts, vec![vec![0, 1], vec![2, 3, 4], vec![6, 7]]);
    }
}
