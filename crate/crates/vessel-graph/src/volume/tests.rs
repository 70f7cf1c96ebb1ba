use super::*;
use crate::memory::StorageContext;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn ctx() -> (tempfile::TempDir, StorageContext) {
    let dir = tempfile::tempdir().unwrap();
    let ctx = StorageContext::new(dir.path(), 64 * 1024 * 1024);
    (dir, ctx)
}

#[test]
fn block_counts_follow_ceiling_division() {
    let (_d, ctx) = ctx();
    let v = BinaryVolume::create([64, 64, 64], [1.0; 3], &ctx).unwrap();
    assert_eq!(v.header().block_count(), 8);
    let v = BinaryVolume::create([33, 32, 32], [1.0; 3], &ctx).unwrap();
    assert_eq!(v.header().blocks_per_axis(), [2, 1, 1]);
    assert_eq!(v.header().block_count(), 2);
    let v = BinaryVolume::create([135, 160, 213], [1.0; 3], &ctx).unwrap();
    assert_eq!(v.header().blocks_per_axis(), [5, 5, 7]);
    assert_eq!(v.header().block_count(), 175);
}

#[test]
fn create_rejects_bad_input() {
    let (_d, ctx) = ctx();
    assert!(BinaryVolume::create([0, 4, 4], [1.0; 3], &ctx).is_err());
    assert!(BinaryVolume::create([4, 4, 4], [1.0, 0.0, 1.0], &ctx).is_err());
    assert!(BinaryVolume::create([1 << 21, 4, 4], [1.0; 3], &ctx).is_err());
    let bad = StorageContext::new("/nonexistent-dir-zzz/sub", 1 << 20);
    assert!(BinaryVolume::create([4, 4, 4], [1.0; 3], &bad).is_err());
}

#[test]
fn fresh_volume_reads_background_everywhere() {
    let (_d, ctx) = ctx();
    let v = BinaryVolume::create([8, 8, 8], [1.0; 3], &ctx).unwrap();
    assert_eq!(v.get([3, 4, 5]), VoxelState::Background);
    assert_eq!(v.get([-1, 0, 0]), VoxelState::Background);
    assert_eq!(v.get([8, 0, 0]), VoxelState::Background);
    let l = LabelVolume::create([8, 8, 8], [1.0; 3], &ctx).unwrap();
    assert_eq!(l.get([3, 4, 5]), UNASSIGNED);
    assert_eq!(l.get([-1, 0, 0]), UNASSIGNED);
}

#[test]
fn read_your_write() {
    let (_d, ctx) = ctx();
    let mut v = BinaryVolume::create([40, 40, 40], [1.0; 3], &ctx).unwrap();
    v.set([7, 8, 9], VoxelState::Foreground);
    assert_eq!(v.get([7, 8, 9]), VoxelState::Foreground);
    v.set([7, 8, 9], VoxelState::FixedForeground);
    assert_eq!(v.get([7, 8, 9]), VoxelState::FixedForeground);
    v.set([7, 8, 9], VoxelState::Erased);
    assert_eq!(v.get([7, 8, 9]), VoxelState::Erased);
    let mut l = LabelVolume::create([40, 40, 40], [1.0; 3], &ctx).unwrap();
    l.set([39, 0, 12], 1234);
    assert_eq!(l.get([39, 0, 12]), 1234);
}

#[test]
fn slab_streaming_counts() {
    let (_d, ctx) = ctx();
    let v = BinaryVolume::create([64, 64, 64], [1.0; 3], &ctx).unwrap();
    let mut n = 0;
    v.for_each_slab(2, |s| {
        assert_eq!(s.perp_dims, [64, 64]);
        assert_eq!(s.data.len(), 64 * 64);
        n += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(n, 64);

    let v = BinaryVolume::create([10, 20, 30], [1.0; 3], &ctx).unwrap();
    let mut n = 0;
    v.for_each_slab(1, |s| {
        assert_eq!(s.perp_dims, [10, 30]);
        n += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(n, 20);
}

#[test]
fn slab_foreground_sum_matches_full_scan() {
    let (_d, ctx) = ctx();
    let mut v = BinaryVolume::create([37, 21, 19], [1.0; 3], &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut expected = 0u64;
    for _ in 0..900 {
        let p = [
            rng.random_range(0..37) as i64,
            rng.random_range(0..21) as i64,
            rng.random_range(0..19) as i64,
        ];
        if !v.get(p).is_foreground() {
            expected += 1;
        }
        v.set(p, VoxelState::Foreground);
    }
    for axis in 0..3 {
        let mut total = 0u64;
        let mut visited = 0u64;
        v.for_each_slab(axis, |s| {
            visited += s.data.len() as u64;
            total += s
                .data
                .iter()
                .filter(|&&b| VoxelState::from_bits(b).is_foreground())
                .count() as u64;
            Ok(())
        })
        .unwrap();
        assert_eq!(total, expected, "axis {axis}");
        assert_eq!(visited, v.header().voxel_count(), "axis {axis}");
    }
    assert_eq!(v.count_foreground(), expected);
}

#[test]
fn surface_merge_examples() {
    let (_d, ctx) = ctx();
    let prev = ActiveSurface::from_sorted(&[5, 9], &ctx).unwrap();
    let merged = surface_merge(&prev, &[9, 2], &ctx).unwrap();
    assert_eq!(merged.to_vec().unwrap(), vec![2, 5, 9]);

    let prev = ActiveSurface::empty(&ctx).unwrap();
    let merged = surface_merge(&prev, &[], &ctx).unwrap();
    assert!(merged.to_vec().unwrap().is_empty());
}

#[test]
fn surface_merge_matches_sort_dedup_oracle() {
    let (_d, ctx) = ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut prev: Vec<u64> = (0..5_000).map(|_| rng.random_range(0..20_000)).collect();
    prev.sort_unstable();
    prev.dedup();
    let additions: Vec<u64> = (0..5_000).map(|_| rng.random_range(0..20_000)).collect();

    let mut oracle: Vec<u64> = prev.iter().chain(additions.iter()).copied().collect();
    oracle.sort_unstable();
    oracle.dedup();

    let surf = ActiveSurface::from_sorted(&prev, &ctx).unwrap();
    let merged = surface_merge(&surf, &additions, &ctx).unwrap();
    assert_eq!(merged.to_vec().unwrap(), oracle);
    assert_eq!(merged.len(), oracle.len() as u64);
}

#[test]
fn surface_builder_windowed_flush() {
    let (_d, ctx) = ctx();
    let tracker = ctx.tracker().clone();
    let mut b = SurfaceBuilder::new(&ctx, tracker).unwrap();
    b.insert(10);
    b.insert(3);
    b.insert(7);
    b.advance(5).unwrap();
    b.insert(5);
    b.insert(20);
    b.remove(20);
    b.insert(6);
    let s = b.finish().unwrap();
    assert_eq!(s.to_vec().unwrap(), vec![3, 5, 6, 7, 10]);
}

#[test]
fn binary_block_packing_is_bit_exact() {
    let (_d, ctx) = ctx();
    let mut v = BinaryVolume::create([64, 32, 32], [1.0; 3], &ctx).unwrap();
    // voxel (33, 2, 3) lives in block 1; within-block index 1 + 32*(2 + 32*3).
    v.set([33, 2, 3], VoxelState::Erased);
    v.set([0, 0, 0], VoxelState::FixedForeground);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("packed.vgv");
    v.save(&path).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    let header = std::str::from_utf8(&bytes[..header_len]).unwrap();
    assert_eq!(header, "VGV1 64 32 32 1 1 1 binary2bit\n");
    assert_eq!(bytes.len() - header_len, 2 * BINARY_BLOCK_BYTES);

    // (0,0,0): block 0, voxel 0, bits [0,2) of byte 0.
    assert_eq!(bytes[header_len] & 0b11, VoxelState::FixedForeground as u8);
    // (33,2,3): block 1, voxel i = 1 + 32*2 + 1024*3 = 3137, byte 784, shift 2.
    let i = 1 + 32 * 2 + 1024 * 3;
    let byte = bytes[header_len + BINARY_BLOCK_BYTES + i / 4];
    assert_eq!((byte >> (2 * (i % 4))) & 0b11, VoxelState::Erased as u8);
}

#[test]
fn save_reopen_round_trip() {
    let (_d, ctx) = ctx();
    let dims = [50, 40, 30];
    let mut v = BinaryVolume::create(dims, [0.5, 1.0, 2.0], &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut pattern = Vec::new();
    for _ in 0..2000 {
        let p = [
            rng.random_range(0..dims[0]) as i64,
            rng.random_range(0..dims[1]) as i64,
            rng.random_range(0..dims[2]) as i64,
        ];
        let s = match rng.random_range(0..3) {
            0 => VoxelState::Foreground,
            1 => VoxelState::FixedForeground,
            _ => VoxelState::Erased,
        };
        v.set(p, s);
        pattern.push(p);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.vgv");
    v.save(&path).unwrap();
    let reopened = BinaryVolume::open(&path, &ctx).unwrap();
    assert_eq!(reopened.dims(), dims);
    assert_eq!(reopened.spacing(), [0.5, 1.0, 2.0]);
    for z in 0..dims[2] as i64 {
        for y in 0..dims[1] as i64 {
            for x in 0..dims[0] as i64 {
                assert_eq!(reopened.get([x, y, z]), v.get([x, y, z]));
            }
        }
    }
}

#[test]
fn label_round_trip_and_sentinel() {
    let (_d, ctx) = ctx();
    let mut l = LabelVolume::create([33, 17, 9], [1.0; 3], &ctx).unwrap();
    l.set([32, 16, 8], 7);
    l.set([0, 0, 0], 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("labels.vgv");
    l.save(&path).unwrap();
    let r = LabelVolume::open(&path, &ctx).unwrap();
    assert_eq!(r.get([32, 16, 8]), 7);
    assert_eq!(r.get([0, 0, 0]), 0);
    assert_eq!(r.get([5, 5, 5]), UNASSIGNED);
}

#[test]
fn import_raw_volume() {
    let (_d, ctx) = ctx();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("raw.bin");
    let dims = [4u32, 3, 2];
    let mut bytes = vec![0u8; 24];
    bytes[0] = 1; // (0,0,0)
    bytes[5] = 255; // (1,1,0)
    bytes[23] = 9; // (3,2,1)
    std::fs::write(&path, &bytes).unwrap();
    let v = BinaryVolume::import_raw(&path, dims, [1.0, 1.0, 2.0], &ctx).unwrap();
    assert_eq!(v.count_foreground(), 3);
    assert!(v.is_foreground([0, 0, 0]));
    assert!(v.is_foreground([1, 1, 0]));
    assert!(v.is_foreground([3, 2, 1]));
    assert!(!v.is_foreground([2, 0, 0]));

    bytes.pop();
    std::fs::write(&path, &bytes).unwrap();
    assert!(BinaryVolume::import_raw(&path, dims, [1.0; 3], &ctx).is_err());
}

#[test]
fn tracked_memory_stays_within_budget_plus_block_and_slab() {
    let dir = tempfile::tempdir().unwrap();
    let budget = 512 * 1024; // tiny budget, 128 KB block cache cap
    let ctx = StorageContext::new(dir.path(), budget);
    let dims = [160u32, 160, 160]; // 125 blocks = 250 KB, twice the cap
    let mut v = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..120_000 {
        let p = [
            rng.random_range(0..160) as i64,
            rng.random_range(0..160) as i64,
            rng.random_range(0..160) as i64,
        ];
        v.set(p, VoxelState::Foreground);
    }
    assert!(
        v.block_loads() > 125,
        "expected reloads after eviction, got {} loads",
        v.block_loads()
    );
    let mut fg = 0u64;
    v.for_each_slab(2, |s| {
        fg += s
            .data
            .iter()
            .filter(|&&b| VoxelState::from_bits(b).is_foreground())
            .count() as u64;
        Ok(())
    })
    .unwrap();
    assert!(fg > 0);
    let slab_bytes = 160 * 160;
    let peak = ctx.tracker().peak_bytes();
    assert!(
        peak <= ctx.volume_cache_cap() + BINARY_BLOCK_BYTES + slab_bytes,
        "peak {peak} exceeds cap {} + block + slab",
        ctx.volume_cache_cap()
    );
    assert!(peak <= budget + BINARY_BLOCK_BYTES + slab_bytes);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn round_trip_random_patterns(seed in 0u64..1000) {
        let dir = tempfile::tempdir().unwrap();
        let ctx = StorageContext::new(dir.path(), 8 * 1024 * 1024);
        let dims = [21u32, 34, 13];
        let mut v = BinaryVolume::create(dims, [1.0; 3], &ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mirror = std::collections::HashMap::new();
        for _ in 0..500 {
            let p = [
                rng.random_range(0..dims[0]) as i64,
                rng.random_range(0..dims[1]) as i64,
                rng.random_range(0..dims[2]) as i64,
            ];
            let s = VoxelState::from_bits(rng.random_range(0..4) as u8);
            v.set(p, s);
            mirror.insert(p, s);
        }
        let file = dir.path().join("prop.vgv");
        v.save(&file).unwrap();
        let r = BinaryVolume::open(&file, &ctx).unwrap();
        for (p, s) in mirror {
            prop_assert_eq!(r.get(p), s);
        }
    }
}
