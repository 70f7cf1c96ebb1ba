//! Static on-disk k-d tree over (position, payload) records.
//!
//! Built once, written to a scratch file, then queried read-only. When the
//! node array fits under the index cache cap it is kept resident (charged
//! against the tracker); otherwise nodes are read from disk on demand.
//! Queries return exactly the brute-force answer set; distance ties are
//! never pruned, and callers disambiguate ties by payload order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::PathBuf;

use crate::error::{Result, VesselGraphError};
use crate::geometry::{dist2, Point3};
use crate::memory::{Charge, StorageContext};

const MAGIC: &[u8; 6] = b"VGKD1\n";
const RECORD_BYTES: usize = 48;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
pub struct PointRecord {
    pub position: Point3,
    pub payload: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub position: Point3,
    pub payload: u64,
    pub dist2: f64,
}

#[derive(Clone, Copy)]
struct Node {
    position: Point3,
    payload: u64,
    split: u8,
    left: u32,
    right: u32,
}

impl Node {
    fn encode(&self, out: &mut [u8]) {
        out[0..8].copy_from_slice(&self.position[0].to_le_bytes());
        out[8..16].copy_from_slice(&self.position[1].to_le_bytes());
        out[16..24].copy_from_slice(&self.position[2].to_le_bytes());
        out[24..32].copy_from_slice(&self.payload.to_le_bytes());
        out[32..36].copy_from_slice(&self.left.to_le_bytes());
        out[36..40].copy_from_slice(&self.right.to_le_bytes());
        out[40] = self.split;
        out[41..48].copy_from_slice(&[0u8; 7]);
    }

    fn decode(buf: &[u8]) -> Node {
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(buf[r].try_into().unwrap());
        let u = |r: std::ops::Range<usize>| u32::from_le_bytes(buf[r].try_into().unwrap());
        Node {
            position: [f(0..8), f(8..16), f(16..24)],
            payload: u64::from_le_bytes(buf[24..32].try_into().unwrap()),
            left: u(32..36),
            right: u(36..40),
            split: buf[40],
        }
    }
}

pub struct StaticPointIndex {
    path: PathBuf,
    file: File,
    len: usize,
    root: u32,
    resident: Option<Vec<Node>>,
    _charge: Charge,
}

/// Build an immutable disk-resident k-d tree. Duplicate positions are kept
/// as separate records.
pub fn build_point_index(points: &[PointRecord], ctx: &StorageContext) -> Result<StaticPointIndex> {
    let mut order: Vec<u32> = (0..points.len() as u32).collect();
    let mut nodes: Vec<Node> = Vec::with_capacity(points.len());

    fn build(
        points: &[PointRecord],
        order: &mut [u32],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> u32 {
        if order.is_empty() {
            return NONE;
        }
        let axis = depth % 3;
        order.sort_by(|&a, &b| {
            let pa = &points[a as usize];
            let pb = &points[b as usize];
            pa.position[axis]
                .partial_cmp(&pb.position[axis])
                .unwrap()
                .then(pa.payload.cmp(&pb.payload))
        });
        let mid = order.len() / 2;
        let rec = &points[order[mid] as usize];
        let id = nodes.len() as u32;
        nodes.push(Node {
            position: rec.position,
            payload: rec.payload,
            split: axis as u8,
            left: NONE,
            right: NONE,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = build(points, lo, depth + 1, nodes);
        let right = build(points, hi, depth + 1, nodes);
        nodes[id as usize].left = left;
        nodes[id as usize].right = right;
        id
    }

    let root = build(points, &mut order, 0, &mut nodes);

    let path = ctx.scratch_file("kdtree");
    {
        let file = File::create(&path).map_err(|e| VesselGraphError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC).map_err(|e| VesselGraphError::io(&path, e))?;
        w.write_all(&(nodes.len() as u64).to_le_bytes())
            .map_err(|e| VesselGraphError::io(&path, e))?;
        w.write_all(&root.to_le_bytes())
            .map_err(|e| VesselGraphError::io(&path, e))?;
        let mut buf = [0u8; RECORD_BYTES];
        for n in &nodes {
            n.encode(&mut buf);
            w.write_all(&buf).map_err(|e| VesselGraphError::io(&path, e))?;
        }
        w.flush().map_err(|e| VesselGraphError::io(&path, e))?;
    }
    open_index(path, ctx)
}

fn open_index(path: PathBuf, ctx: &StorageContext) -> Result<StaticPointIndex> {
    let mut file = File::open(&path).map_err(|e| VesselGraphError::io(&path, e))?;
    let mut head = [0u8; 18];
    file.read_exact(&mut head)
        .map_err(|e| VesselGraphError::io(&path, e))?;
    if &head[0..6] != MAGIC {
        return Err(VesselGraphError::BadHeader {
            path,
            reason: "not a point index file".into(),
        });
    }
    let len = u64::from_le_bytes(head[6..14].try_into().unwrap()) as usize;
    let root = u32::from_le_bytes(head[14..18].try_into().unwrap());
    let bytes = len * RECORD_BYTES;
    let mut charge = Charge::new(ctx.tracker().clone(), 0);
    let resident = if bytes <= ctx.index_cache_cap() {
        charge.resize(bytes);
        let mut raw = vec![0u8; bytes];
        file.read_exact_at(&mut raw, 18)
            .map_err(|e| VesselGraphError::io(&path, e))?;
        Some(
            raw.chunks_exact(RECORD_BYTES)
                .map(Node::decode)
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    Ok(StaticPointIndex {
        path,
        file,
        len,
        root,
        resident,
        _charge: charge,
    })
}

impl StaticPointIndex {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn node(&self, id: u32) -> Node {
        if let Some(nodes) = &self.resident {
            return nodes[id as usize];
        }
        let mut buf = [0u8; RECORD_BYTES];
        let off = 18 + id as u64 * RECORD_BYTES as u64;
        self.file
            .read_exact_at(&mut buf, off)
            .unwrap_or_else(|e| panic!("index read at {off} in {:?} failed: {e}", self.path));
        Node::decode(&buf)
    }

    /// Closest record; exact distance ties resolve to the smallest payload.
    pub fn nearest(&self, q: Point3) -> Option<Neighbor> {
        let mut best: Option<Neighbor> = None;
        self.nearest_walk(self.root, q, &mut best);
        best
    }

    fn nearest_walk(&self, id: u32, q: Point3, best: &mut Option<Neighbor>) {
        if id == NONE {
            return;
        }
        let node = self.node(id);
        let d2 = dist2(node.position, q);
        let better = match best {
            None => true,
            Some(b) => d2 < b.dist2 || (d2 == b.dist2 && node.payload < b.payload),
        };
        if better {
            *best = Some(Neighbor {
                position: node.position,
                payload: node.payload,
                dist2: d2,
            });
        }
        let diff = q[node.split as usize] - node.position[node.split as usize];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.nearest_walk(near, q, best);
        // visit the far side on exact ties too
        if best.as_ref().map_or(true, |b| diff * diff <= b.dist2) {
            self.nearest_walk(far, q, best);
        }
    }

    /// All records at exactly the minimal distance, sorted by payload.
    pub fn nearest_ties(&self, q: Point3) -> Vec<Neighbor> {
        let Some(best) = self.nearest(q) else {
            return Vec::new();
        };
        let mut out = self.within_dist2(q, best.dist2);
        out.retain(|n| n.dist2 == best.dist2);
        out
    }

    /// All records with distance <= radius (inclusive), sorted by payload.
    pub fn within_radius(&self, q: Point3, radius: f64) -> Vec<Neighbor> {
        self.within_dist2(q, radius * radius)
    }

    fn within_dist2(&self, q: Point3, r2: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        self.range_walk(self.root, q, r2, &mut out);
        out.sort_by_key(|n| n.payload);
        out
    }

    fn range_walk(&self, id: u32, q: Point3, r2: f64, out: &mut Vec<Neighbor>) {
        if id == NONE {
            return;
        }
        let node = self.node(id);
        let d2 = dist2(node.position, q);
        if d2 <= r2 {
            out.push(Neighbor {
                position: node.position,
                payload: node.payload,
                dist2: d2,
            });
        }
        let diff = q[node.split as usize] - node.position[node.split as usize];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.range_walk(near, q, r2, out);
        if diff * diff <= r2 {
            self.range_walk(far, q, r2, out);
        }
    }
}

impl Drop for StaticPointIndex {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ctx() -> (tempfile::TempDir, StorageContext) {
        let dir = tempfile::tempdir().unwrap();
        let ctx = StorageContext::new(dir.path(), 64 * 1024 * 1024);
        (dir, ctx)
    }

    fn brute_nearest(points: &[PointRecord], q: Point3) -> Option<Neighbor> {
        points
            .iter()
            .map(|p| Neighbor {
                position: p.position,
                payload: p.payload,
                dist2: dist2(p.position, q),
            })
            .min_by(|a, b| {
                a.dist2
                    .partial_cmp(&b.dist2)
                    .unwrap()
                    .then(a.payload.cmp(&b.payload))
            })
    }

    #[test]
    fn single_point_always_nearest() {
        let (_d, ctx) = ctx();
        let pts = [PointRecord {
            position: [1.0, 2.0, 3.0],
            payload: 42,
        }];
        let idx = build_point_index(&pts, &ctx).unwrap();
        let n = idx.nearest([100.0, -50.0, 0.0]).unwrap();
        assert_eq!(n.payload, 42);
        assert_eq!(n.position, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_index_returns_nothing() {
        let (_d, ctx) = ctx();
        let idx = build_point_index(&[], &ctx).unwrap();
        assert!(idx.is_empty());
        assert!(idx.nearest([0.0; 3]).is_none());
        assert!(idx.within_radius([0.0; 3], 10.0).is_empty());
    }

    #[test]
    fn random_queries_match_linear_scan() {
        let (_d, ctx) = ctx();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let points: Vec<PointRecord> = (0..1000)
            .map(|i| PointRecord {
                // grid coordinates make exact distance ties common
                position: [
                    rng.random_range(0..20) as f64,
                    rng.random_range(0..20) as f64,
                    rng.random_range(0..20) as f64,
                ],
                payload: i,
            })
            .collect();
        let idx = build_point_index(&points, &ctx).unwrap();
        for _ in 0..100 {
            let q = [
                rng.random_range(0..21) as f64,
                rng.random_range(0..21) as f64,
                rng.random_range(0..21) as f64,
            ];
            let got = idx.nearest(q).unwrap();
            let want = brute_nearest(&points, q).unwrap();
            assert_eq!(got.payload, want.payload, "query {q:?}");
            assert_eq!(got.dist2, want.dist2);

            let r = rng.random_range(1..6) as f64;
            let got: Vec<u64> = idx.within_radius(q, r).iter().map(|n| n.payload).collect();
            let mut want: Vec<u64> = points
                .iter()
                .filter(|p| dist2(p.position, q) <= r * r)
                .map(|p| p.payload)
                .collect();
            want.sort_unstable();
            assert_eq!(got, want, "range query {q:?} r {r}");
        }
    }

    #[test]
    fn duplicates_are_all_returned() {
        let (_d, ctx) = ctx();
        let pts: Vec<PointRecord> = (0..5)
            .map(|i| PointRecord {
                position: [1.0, 1.0, 1.0],
                payload: i,
            })
            .collect();
        let idx = build_point_index(&pts, &ctx).unwrap();
        let hits = idx.within_radius([1.0, 1.0, 1.0], 0.5);
        assert_eq!(hits.len(), 5);
        assert_eq!(idx.nearest([0.0; 3]).unwrap().payload, 0);
        assert_eq!(idx.nearest_ties([2.0, 1.0, 1.0]).len(), 5);
    }

    #[test]
    fn paged_queries_equal_resident_queries() {
        let dir = tempfile::tempdir().unwrap();
        // budget so small the index cannot stay resident
        let small = StorageContext::new(dir.path(), 1);
        let big = StorageContext::new(dir.path(), 64 * 1024 * 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let points: Vec<PointRecord> = (0..500)
            .map(|i| PointRecord {
                position: [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0, 0.0],
                payload: i,
            })
            .collect();
        let paged = build_point_index(&points, &small).unwrap();
        assert!(paged.resident.is_none());
        let resident = build_point_index(&points, &big).unwrap();
        assert!(resident.resident.is_some());
        for _ in 0..50 {
            let q = [rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0, 0.0];
            assert_eq!(paged.nearest(q), resident.nearest(q));
        }
    }
}
