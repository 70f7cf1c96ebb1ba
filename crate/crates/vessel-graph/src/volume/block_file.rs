//! Paged access to the block data of a volume file.
//!
//! Blocks live in a file after an ASCII header line. A capped cache keeps
//! recently used blocks in memory; dirty blocks are written back on
//! eviction. Blocks that were never written ("vacant") read as a uniform
//! fill byte without touching the file, which keeps freshly created volumes
//! cheap no matter their size.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Result, VesselGraphError};
use crate::memory::{Charge, MemoryTracker};

struct CacheEntry {
    bytes: Box<[u8]>,
    dirty: bool,
    stamp: u64,
}

pub(super) struct BlockFile {
    file: File,
    path: PathBuf,
    data_offset: u64,
    block_bytes: usize,
    fill: u8,
    on_disk: Vec<bool>,
    cache: HashMap<usize, CacheEntry>,
    stamp: u64,
    cap_bytes: usize,
    charge: Charge,
    tracker: Arc<MemoryTracker>,
    loads: u64,
    delete_on_drop: bool,
}

impl BlockFile {
    pub fn create(
        path: PathBuf,
        header: &[u8],
        n_blocks: usize,
        block_bytes: usize,
        fill: u8,
        cap_bytes: usize,
        tracker: Arc<MemoryTracker>,
    ) -> Result<BlockFile> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| VesselGraphError::io(&path, e))?;
        file.write_all_at(header, 0)
            .map_err(|e| VesselGraphError::io(&path, e))?;
        let data_offset = header.len() as u64;
        file.set_len(data_offset + n_blocks as u64 * block_bytes as u64)
            .map_err(|e| VesselGraphError::io(&path, e))?;
        Ok(BlockFile {
            file,
            path,
            data_offset,
            block_bytes,
            fill,
            on_disk: vec![false; n_blocks],
            cache: HashMap::new(),
            stamp: 0,
            cap_bytes,
            charge: Charge::new(tracker.clone(), 0),
            tracker,
            loads: 0,
            delete_on_drop: true,
        })
    }

    pub fn open(
        path: PathBuf,
        data_offset: u64,
        n_blocks: usize,
        block_bytes: usize,
        fill: u8,
        cap_bytes: usize,
        tracker: Arc<MemoryTracker>,
    ) -> Result<BlockFile> {
        let file = File::open(&path).map_err(|e| VesselGraphError::io(&path, e))?;
        let expected = data_offset + n_blocks as u64 * block_bytes as u64;
        let actual = file
            .metadata()
            .map_err(|e| VesselGraphError::io(&path, e))?
            .len();
        if actual != expected {
            return Err(VesselGraphError::BadHeader {
                path,
                reason: format!("file has {actual} bytes, expected {expected}"),
            });
        }
        Ok(BlockFile {
            file,
            path,
            data_offset,
            block_bytes,
            fill,
            on_disk: vec![true; n_blocks],
            cache: HashMap::new(),
            stamp: 0,
            cap_bytes,
            charge: Charge::new(tracker.clone(), 0),
            tracker,
            loads: 0,
            delete_on_drop: false,
        })
    }

    pub fn tracker(&self) -> Arc<MemoryTracker> {
        self.tracker.clone()
    }

    pub fn loads(&self) -> u64 {
        self.loads
    }

    #[inline]
    pub fn is_vacant(&self, bidx: usize) -> bool {
        !self.on_disk[bidx] && !self.cache.contains_key(&bidx)
    }

    #[inline]
    pub fn byte_at(&mut self, bidx: usize, offset: usize) -> u8 {
        if let Some(e) = self.cache.get_mut(&bidx) {
            self.stamp += 1;
            e.stamp = self.stamp;
            return e.bytes[offset];
        }
        if !self.on_disk[bidx] {
            return self.fill;
        }
        self.load(bidx).bytes[offset]
    }

    #[inline]
    pub fn u32_at(&mut self, bidx: usize, voxel: usize) -> u32 {
        let off = voxel * 4;
        if let Some(e) = self.cache.get_mut(&bidx) {
            self.stamp += 1;
            e.stamp = self.stamp;
            return u32::from_le_bytes(e.bytes[off..off + 4].try_into().unwrap());
        }
        if !self.on_disk[bidx] {
            return u32::from_le_bytes([self.fill; 4]);
        }
        let e = self.load(bidx);
        u32::from_le_bytes(e.bytes[off..off + 4].try_into().unwrap())
    }

    pub fn update_byte(&mut self, bidx: usize, offset: usize, f: impl FnOnce(u8) -> u8) {
        let e = self.entry_mut(bidx);
        e.bytes[offset] = f(e.bytes[offset]);
        e.dirty = true;
        self.evict_to_cap();
    }

    pub fn set_u32(&mut self, bidx: usize, voxel: usize, value: u32) {
        let off = voxel * 4;
        let e = self.entry_mut(bidx);
        e.bytes[off..off + 4].copy_from_slice(&value.to_le_bytes());
        e.dirty = true;
        self.evict_to_cap();
    }

    /// Copy a block's current content (cache, disk or fill) into `buf`.
    pub fn read_block_into(&mut self, bidx: usize, buf: &mut [u8]) -> Result<()> {
        debug_assert_eq!(buf.len(), self.block_bytes);
        if let Some(e) = self.cache.get(&bidx) {
            buf.copy_from_slice(&e.bytes);
        } else if self.on_disk[bidx] {
            self.file
                .read_exact_at(buf, self.block_offset(bidx))
                .map_err(|e| VesselGraphError::io(&self.path, e))?;
        } else {
            buf.fill(self.fill);
        }
        Ok(())
    }

    /// Overwrite a whole block.
    pub fn write_block(&mut self, bidx: usize, bytes: &[u8]) -> Result<()> {
        debug_assert_eq!(bytes.len(), self.block_bytes);
        let e = self.entry_mut(bidx);
        e.bytes.copy_from_slice(bytes);
        e.dirty = true;
        self.evict_to_cap();
        Ok(())
    }

    fn block_offset(&self, bidx: usize) -> u64 {
        self.data_offset + bidx as u64 * self.block_bytes as u64
    }

    fn entry_mut(&mut self, bidx: usize) -> &mut CacheEntry {
        if self.cache.contains_key(&bidx) {
            self.stamp += 1;
            let e = self.cache.get_mut(&bidx).unwrap();
            e.stamp = self.stamp;
            e
        } else {
            self.load(bidx)
        }
    }

    /// Materialize a block into the cache (from disk or fill).
    fn load(&mut self, bidx: usize) -> &mut CacheEntry {
        let mut bytes = vec![self.fill; self.block_bytes].into_boxed_slice();
        if self.on_disk[bidx] {
            self.file
                .read_exact_at(&mut bytes, self.block_offset(bidx))
                .unwrap_or_else(|e| panic!("read of block {bidx} in {:?} failed: {e}", self.path));
        }
        self.loads += 1;
        self.stamp += 1;
        let entry = CacheEntry {
            bytes,
            dirty: false,
            stamp: self.stamp,
        };
        self.cache.insert(bidx, entry);
        self.charge.resize(self.cache.len() * self.block_bytes);
        self.evict_to_cap_except(bidx);
        self.cache.get_mut(&bidx).unwrap()
    }

    fn evict_to_cap(&mut self) {
        self.evict_to_cap_except(usize::MAX);
    }

    fn evict_to_cap_except(&mut self, keep: usize) {
        while self.cache.len() > 1 && self.cache.len() * self.block_bytes > self.cap_bytes {
            let victim = self
                .cache
                .iter()
                .filter(|(&k, _)| k != keep)
                .min_by_key(|(_, e)| e.stamp)
                .map(|(&k, _)| k);
            let Some(victim) = victim else { break };
            let e = self.cache.remove(&victim).unwrap();
            if e.dirty {
                self.file
                    .write_all_at(&e.bytes, self.block_offset(victim))
                    .unwrap_or_else(|err| {
                        panic!("writeback of block {victim} in {:?} failed: {err}", self.path)
                    });
                self.on_disk[victim] = true;
            }
            self.charge.resize(self.cache.len() * self.block_bytes);
        }
    }

}

impl Drop for BlockFile {
    fn drop(&mut self) {
        if self.delete_on_drop {
            let _ = std::fs::remove_file(&self.path);
        }
    }
}
