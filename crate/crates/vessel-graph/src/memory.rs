//! Instrumented accounting of buffer memory.
//!
//! Every sizable buffer (volume block caches, slab buffers, spatial index
//! payloads, flood subvolumes, surface windows) is charged against a shared
//! tracker. The tracker does not enforce anything by itself; enforcement
//! happens in the block caches, which evict down to their cap. The tracker
//! exists so that tests and the pipeline can assert that the process never
//! holds more buffer memory than the configured budget allows.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

#[derive(Debug, Default)]
pub struct MemoryTracker {
    current: AtomicUsize,
    peak: AtomicUsize,
    largest_single: AtomicUsize,
}

impl MemoryTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, bytes: usize) {
        if bytes == 0 {
            return;
        }
        let now = self.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        self.peak.fetch_max(now, Ordering::Relaxed);
        self.largest_single.fetch_max(bytes, Ordering::Relaxed);
    }

    pub fn release(&self, bytes: usize) {
        if bytes == 0 {
            return;
        }
        let prev = self.current.fetch_sub(bytes, Ordering::Relaxed);
        debug_assert!(prev >= bytes, "released more bytes than charged");
    }

    /// Bytes currently charged.
    pub fn current_bytes(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    /// High-water mark of charged bytes.
    pub fn peak_bytes(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    /// Largest single charged allocation. A whole-volume materialization
    /// would show up here.
    pub fn largest_single_allocation(&self) -> usize {
        self.largest_single.load(Ordering::Relaxed)
    }
}

/// RAII charge against a tracker.
pub struct Charge {
    tracker: Arc<MemoryTracker>,
    bytes: usize,
}

impl Charge {
    pub fn new(tracker: Arc<MemoryTracker>, bytes: usize) -> Self {
        tracker.charge(bytes);
        Charge { tracker, bytes }
    }

    /// Adjust the charge to a new size (e.g. after a buffer resize).
    pub fn resize(&mut self, bytes: usize) {
        if bytes > self.bytes {
            self.tracker.charge(bytes - self.bytes);
        } else {
            self.tracker.release(self.bytes - bytes);
        }
        self.bytes = bytes;
    }

    pub fn bytes(&self) -> usize {
        self.bytes
    }
}

impl Drop for Charge {
    fn drop(&mut self) {
        self.tracker.release(self.bytes);
    }
}

/// A plain buffer whose allocation is charged against a tracker.
pub struct TrackedVec<T> {
    data: Vec<T>,
    _charge: Charge,
}

impl<T: Clone> TrackedVec<T> {
    pub fn new(tracker: Arc<MemoryTracker>, len: usize, fill: T) -> Self {
        let charge = Charge::new(tracker, len * std::mem::size_of::<T>());
        TrackedVec {
            data: vec![fill; len],
            _charge: charge,
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }
}

impl<T> std::ops::Index<usize> for TrackedVec<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> std::ops::IndexMut<usize> for TrackedVec<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

/// Shared scratch directory, memory budget and tracker handed to every
/// stage of the pipeline. Cache caps are derived from the budget so that
/// the handful of volumes alive at any one time stay within it in total.
#[derive(Clone)]
pub struct StorageContext {
    scratch: PathBuf,
    budget_bytes: usize,
    tracker: Arc<MemoryTracker>,
    counter: Arc<AtomicU64>,
}

impl StorageContext {
    pub const DEFAULT_BUDGET: usize = 256 * 1024 * 1024;

    pub fn new(scratch: impl Into<PathBuf>, budget_bytes: usize) -> Self {
        StorageContext {
            scratch: scratch.into(),
            budget_bytes,
            tracker: Arc::new(MemoryTracker::new()),
            counter: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn scratch_dir(&self) -> &Path {
        &self.scratch
    }

    pub fn budget_bytes(&self) -> usize {
        self.budget_bytes
    }

    pub fn tracker(&self) -> &Arc<MemoryTracker> {
        &self.tracker
    }

    /// Per-volume block cache cap. At most four volumes are alive at once
    /// in any pipeline stage, so a quarter of the budget each keeps the
    /// total under the budget.
    pub fn volume_cache_cap(&self) -> usize {
        self.budget_bytes / 4
    }

    /// Cap for resident spatial index data.
    pub fn index_cache_cap(&self) -> usize {
        self.budget_bytes / 8
    }

    /// Fresh scratch file path with a short tag describing its role.
    pub fn scratch_file(&self, tag: &str) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        self.scratch.join(format!("{tag}-{n:06}.tmp"))
    }
}
