//! On-disk sorted sequences of linear voxel positions.
//!
//! Thinning keeps its deletion candidates ("active surface") as sorted,
//! duplicate-free u64 position files that are streamed front to back.
//! The builder collects near-sorted insertions in a bounded window and
//! flushes finalized prefixes to disk, so surface construction needs only
//! a couple of slabs worth of memory.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Result, VesselGraphError};
use crate::memory::{Charge, MemoryTracker, StorageContext};

/// Sorted, duplicate-free sequence of linear voxel positions on disk.
pub struct ActiveSurface {
    path: PathBuf,
    len: u64,
}

impl ActiveSurface {
    pub fn empty(ctx: &StorageContext) -> Result<ActiveSurface> {
        let path = ctx.scratch_file("surface");
        File::create(&path).map_err(|e| VesselGraphError::io(&path, e))?;
        Ok(ActiveSurface { path, len: 0 })
    }

    pub fn from_sorted(positions: &[u64], ctx: &StorageContext) -> Result<ActiveSurface> {
        let mut w = PositionWriter::create(ctx)?;
        for &p in positions {
            w.push(p)?;
        }
        w.finish()
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn reader(&self) -> Result<PositionReader> {
        PositionReader::open(&self.path)
    }

    /// Collect into memory; intended for tests and small surfaces.
    pub fn to_vec(&self) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.len as usize);
        let mut r = self.reader()?;
        while let Some(p) = r.next()? {
            out.push(p);
        }
        Ok(out)
    }
}

impl Drop for ActiveSurface {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Streaming reader over a position file.
pub struct PositionReader {
    reader: BufReader<File>,
}

impl PositionReader {
    fn open(path: &PathBuf) -> Result<PositionReader> {
        let file = File::open(path).map_err(|e| VesselGraphError::io(path, e))?;
        Ok(PositionReader {
            reader: BufReader::with_capacity(1 << 16, file),
        })
    }

    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<Option<u64>> {
        let mut buf = [0u8; 8];
        match self.reader.read_exact(&mut buf) {
            Ok(()) => Ok(Some(u64::from_le_bytes(buf))),
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(None),
            Err(e) => Err(VesselGraphError::io("<position stream>", e)),
        }
    }
}

/// Writer enforcing strictly ascending positions.
pub struct PositionWriter {
    path: PathBuf,
    writer: BufWriter<File>,
    last: Option<u64>,
    len: u64,
}

impl PositionWriter {
    pub fn create(ctx: &StorageContext) -> Result<PositionWriter> {
        let path = ctx.scratch_file("surface");
        let file = File::create(&path).map_err(|e| VesselGraphError::io(&path, e))?;
        Ok(PositionWriter {
            path,
            writer: BufWriter::with_capacity(1 << 16, file),
            last: None,
            len: 0,
        })
    }

    /// Append a position; duplicates of the previous position are dropped.
    pub fn push(&mut self, pos: u64) -> Result<()> {
        if let Some(last) = self.last {
            if pos == last {
                return Ok(());
            }
            assert!(pos > last, "positions must be pushed in ascending order");
        }
        self.writer
            .write_all(&pos.to_le_bytes())
            .map_err(|e| VesselGraphError::io(&self.path, e))?;
        self.last = Some(pos);
        self.len += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<ActiveSurface> {
        self.writer
            .flush()
            .map_err(|e| VesselGraphError::io(&self.path, e))?;
        let path = std::mem::take(&mut self.path);
        let len = self.len;
        std::mem::forget(self);
        Ok(ActiveSurface { path, len })
    }
}

impl Drop for PositionWriter {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Builds a sorted surface from insertions that may arrive slightly out of
/// order. Entries below the advancing watermark are flushed to disk and can
/// no longer be inserted or removed.
pub struct SurfaceBuilder {
    window: BTreeSet<u64>,
    writer: PositionWriter,
    watermark: u64,
    charge: Charge,
}

impl SurfaceBuilder {
    pub fn new(ctx: &StorageContext, tracker: Arc<MemoryTracker>) -> Result<SurfaceBuilder> {
        Ok(SurfaceBuilder {
            window: BTreeSet::new(),
            writer: PositionWriter::create(ctx)?,
            watermark: 0,
            charge: Charge::new(tracker, 0),
        })
    }

    pub fn insert(&mut self, pos: u64) {
        assert!(
            pos >= self.watermark,
            "insert at {pos} below watermark {}",
            self.watermark
        );
        self.window.insert(pos);
        self.charge.resize(self.window.len() * 24);
    }

    pub fn remove(&mut self, pos: u64) {
        debug_assert!(pos >= self.watermark, "remove below watermark");
        self.window.remove(&pos);
    }

    /// Declare that all future insertions are `>= min_future`; flushes the
    /// finalized prefix of the window to disk.
    pub fn advance(&mut self, min_future: u64) -> Result<()> {
        if min_future <= self.watermark {
            return Ok(());
        }
        let finalized: Vec<u64> = self.window.range(..min_future).copied().collect();
        for p in &finalized {
            self.window.remove(p);
            self.writer.push(*p)?;
        }
        self.charge.resize(self.window.len() * 24);
        self.watermark = min_future;
        Ok(())
    }

    pub fn finish(mut self) -> Result<ActiveSurface> {
        for p in std::mem::take(&mut self.window) {
            self.writer.push(p)?;
        }
        self.writer.finish()
    }
}

/// Sorted, deduplicated union of a previous surface and a batch of
/// additions (which need not be sorted).
pub fn surface_merge(
    prev: &ActiveSurface,
    additions: &[u64],
    ctx: &StorageContext,
) -> Result<ActiveSurface> {
    let mut adds: Vec<u64> = additions.to_vec();
    adds.sort_unstable();
    adds.dedup();
    let mut out = PositionWriter::create(ctx)?;
    let mut prev_reader = prev.reader()?;
    let mut a = prev_reader.next()?;
    let mut bi = 0usize;
    loop {
        match (a, adds.get(bi).copied()) {
            (Some(x), Some(y)) => {
                if x <= y {
                    out.push(x)?;
                    if x == y {
                        bi += 1;
                    }
                    a = prev_reader.next()?;
                } else {
                    out.push(y)?;
                    bi += 1;
                }
            }
            (Some(x), None) => {
                out.push(x)?;
                a = prev_reader.next()?;
            }
            (None, Some(y)) => {
                out.push(y)?;
                bi += 1;
            }
            (None, None) => break,
        }
    }
    out.finish()
}

/// Streaming sorted merge (with dedup) of two surfaces.
pub fn merge_sorted_surfaces(
    a: &ActiveSurface,
    b: &ActiveSurface,
    ctx: &StorageContext,
) -> Result<ActiveSurface> {
    let mut out = PositionWriter::create(ctx)?;
    let mut ra = a.reader()?;
    let mut rb = b.reader()?;
    let mut x = ra.next()?;
    let mut y = rb.next()?;
    loop {
        match (x, y) {
            (Some(px), Some(py)) => {
                if px <= py {
                    out.push(px)?;
                    if px == py {
                        y = rb.next()?;
                    }
                    x = ra.next()?;
                } else {
                    out.push(py)?;
                    y = rb.next()?;
                }
            }
            (Some(px), None) => {
                out.push(px)?;
                x = ra.next()?;
            }
            (None, Some(py)) => {
                out.push(py)?;
                y = rb.next()?;
            }
            (None, None) => break,
        }
    }
    out.finish()
}
