//! Shearsort of `W×W` tiles and the base-case run builder.
//!
//! A tile is stored column-major, so element `(r, c)` sits at word `c·W + r`
//! and row `r` lives entirely in bank `r`. Each lane sorts its own row with a
//! fixed comparator network; every step is one warp access with lane `t` on
//! bank `t`. Column phases are row phases on the transposed grid and the
//! transposes themselves happen in registers.

use rayon::prelude::*;

use crate::analytics::merge_round_count;
use crate::blockheap::bitonic_merge_split;
use crate::error::{Error, Result};
use crate::machine::{Direction, MachineConfig, Metrics};
use crate::{Key, SENTINEL};

/// Comparators of Batcher's odd-even merge sort for `n` inputs (a power of
/// two), in execution order.
pub fn odd_even_merge_network(n: usize) -> Vec<(usize, usize)> {
    assert!(n.is_power_of_two(), "network size must be a power of two");
    let mut net = Vec::new();
    let mut p = 1;
    while p < n {
        let mut k = p;
        while k >= 1 {
            for j in (k % p..n - k).step_by(2 * k) {
                for i in 0..k.min(n - j - k) {
                    if (i + j) / (2 * p) == (i + j + k) / (2 * p) {
                        net.push((i + j, i + j + k));
                    }
                }
            }
            k /= 2;
        }
        p *= 2;
    }
    net
}

/// Sorts `W×W` keys given in column-major order and returns them in
/// row-major ascending order.
///
/// Runs `log2 W` phases of alternating row sorts (even rows ascending, odd
/// rows descending) followed by ascending column sorts, then one final
/// ascending sort of every row.
pub fn shearsort_tile(tile: &[Key], cfg: &MachineConfig, metrics: &mut Metrics) -> Result<Vec<Key>> {
    let w = cfg.warp_width;
    if tile.len() != w * w {
        return Err(Error::TileSize { expected: w * w, got: tile.len() });
    }
    let net = odd_even_merge_network(w);
    let mut grid = tile.to_vec();
    let mut lanes = vec![None; w];

    // A network step on column `c` has lane `t` at word `c·W + t`; its bank
    // behaviour depends only on `c`, so each column's access is charged into
    // a template once and replayed.
    let column_charge: Vec<Metrics> = (0..w)
        .map(|c| {
            for (t, slot) in lanes.iter_mut().enumerate() {
                *slot = Some((c * w + t) as u64);
            }
            let mut m = Metrics::default();
            m.charge_shared(&lanes, cfg);
            m
        })
        .collect();

    let loads: Metrics = column_charge.iter().sum();
    *metrics += loads;
    for _ in 0..w.trailing_zeros() {
        sort_rows(&mut grid, w, &net, true);
        sort_columns(&mut grid, w, &net);
    }
    sort_rows(&mut grid, w, &net, false);
    *metrics += loads;

    let phases = 2 * w.trailing_zeros() as u64 + 1;
    for &(a, _) in &net {
        let step = column_charge[a];
        metrics.shared_accesses += phases * step.shared_accesses;
        metrics.conflict_passes += phases * step.conflict_passes;
    }
    metrics.compare_exchanges += phases * (net.len() * w) as u64;

    let mut out = vec![0; w * w];
    for r in 0..w {
        for c in 0..w {
            out[r * w + c] = grid[c * w + r];
        }
    }
    Ok(out)
}

fn sort_rows(grid: &mut [Key], w: usize, net: &[(usize, usize)], alternate: bool) {
    for &(a, b) in net {
        let (left, right) = grid.split_at_mut(b * w);
        let xs = &mut left[a * w..a * w + w];
        let ys = &mut right[..w];
        for (r, (x, y)) in xs.iter_mut().zip(ys.iter_mut()).enumerate() {
            let (lo, hi) = ((*x).min(*y), (*x).max(*y));
            if alternate && r % 2 == 1 {
                (*x, *y) = (hi, lo);
            } else {
                (*x, *y) = (lo, hi);
            }
        }
    }
}

fn sort_columns(grid: &mut [Key], w: usize, net: &[(usize, usize)]) {
    for column in grid.chunks_exact_mut(w) {
        for &(a, b) in net {
            let (x, y) = (column[a], column[b]);
            column[a] = x.min(y);
            column[b] = x.max(y);
        }
    }
}

/// Base run length actually used: the smallest power-of-two multiple of
/// `cfg.base_size`, at most `cfg.base_limit`, that minimizes the number of
/// `fan_in`-way merge rounds for `n` keys.
pub fn effective_base(n: usize, fan_in: usize, cfg: &MachineConfig) -> usize {
    let mut best = cfg.base_size;
    let mut best_rounds = merge_round_count(n, best, fan_in);
    let mut b = cfg.base_size;
    while b * 2 <= cfg.base_limit && best_rounds > 0 {
        b *= 2;
        let rounds = merge_round_count(n, b, fan_in);
        if rounds < best_rounds {
            best = b;
            best_rounds = rounds;
        }
    }
    best
}

/// Sorted runs of `run_len` consecutive keys; the last run may be shorter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Runs {
    pub keys: Vec<Key>,
    pub run_len: usize,
}

impl Runs {
    pub fn count(&self) -> usize {
        self.keys.len().div_ceil(self.run_len)
    }

    pub fn iter(&self) -> std::slice::Chunks<'_, Key> {
        self.keys.chunks(self.run_len)
    }
}

/// Cuts `data` into runs of `base` keys and sorts each one: shearsort on
/// tiles of `min(base, W²)` keys, then bitonic doubling merges up to `base`.
pub fn base_case_sort(data: &[Key], base: usize, cfg: &MachineConfig, metrics: &mut Metrics) -> Result<Runs> {
    cfg.validate()?;
    if !base.is_power_of_two() {
        return Err(Error::InvalidConfig(format!("base {base} must be a power of two")));
    }
    let mut keys = data.to_vec();
    let per_run: Vec<Metrics> = keys
        .par_chunks_mut(base)
        .map(|run| {
            let mut m = Metrics::default();
            sort_run(run, base, cfg, &mut m);
            m
        })
        .collect();
    *metrics += per_run.iter().sum::<Metrics>();
    Ok(Runs { keys, run_len: base })
}

fn sort_run(run: &mut [Key], base: usize, cfg: &MachineConfig, metrics: &mut Metrics) {
    let w = cfg.warp_width;
    let tile = base.min(w * w);
    let cap = run.len().next_power_of_two().max(tile).min(base);
    let mut buf = Vec::with_capacity(cap);
    let mut grid = vec![SENTINEL; w * w];

    for chunk_start in (0..cap).step_by(tile) {
        let real = run.len().saturating_sub(chunk_start).min(tile);
        grid.fill(SENTINEL);
        if real > 0 {
            grid[..real].copy_from_slice(&run[chunk_start..chunk_start + real]);
        }
        metrics.charge_global(real, Direction::Read, cfg);
        let sorted = shearsort_tile(&grid, cfg, metrics).expect("grid has W² keys");
        buf.extend_from_slice(&sorted[..tile]);
    }

    let mut width = tile;
    let mut lanes = vec![None; w];
    while width < cap {
        for pair in buf.chunks_exact_mut(2 * width) {
            doubling_merge(pair, &mut lanes, cfg, metrics);
        }
        width *= 2;
    }

    run.copy_from_slice(&buf[..run.len()]);
    metrics.charge_global(run.len(), Direction::Write, cfg);
}

// Bitonic merge of two sorted halves. Stages with stride at least W go
// through shared memory, W compare-exchanges per warp access on consecutive
// words; smaller strides run in registers.
fn doubling_merge(pair: &mut [Key], lanes: &mut [Option<u64>], cfg: &MachineConfig, metrics: &mut Metrics) {
    let w = cfg.warp_width;
    let half = pair.len() / 2;
    let (low, high) = pair.split_at_mut(half);
    bitonic_merge_split(low, high, metrics);

    let mut stride = half;
    while stride >= w {
        for base in (0..pair.len()).step_by(2 * stride) {
            for batch in (base..base + stride).step_by(w) {
                for (t, slot) in lanes.iter_mut().enumerate() {
                    *slot = Some((batch + t) as u64);
                }
                metrics.charge_shared(lanes, cfg);
            }
        }
        stride /= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(w: usize) -> MachineConfig {
        MachineConfig { base_size: w * w, base_limit: 4 * w * w, ..MachineConfig::with_width(w) }
    }

    fn shuffled(n: usize, seed: u64) -> Vec<Key> {
        let mut v: Vec<Key> = (0..n as Key).collect();
        let mut s = seed | 1;
        for i in (1..n).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            v.swap(i, (s % (i as u64 + 1)) as usize);
        }
        v
    }

    #[test]
    fn network_sizes() {
        assert_eq!(odd_even_merge_network(2).len(), 1);
        assert_eq!(odd_even_merge_network(4).len(), 5);
        assert_eq!(odd_even_merge_network(8).len(), 19);
        assert_eq!(odd_even_merge_network(32).len(), 191);
    }

    #[test]
    fn network_sorts_all_zero_one_inputs() {
        for n in [2usize, 4, 8, 16] {
            let net = odd_even_merge_network(n);
            for mask in 0u32..(1 << n) {
                let mut v: Vec<u32> = (0..n).map(|i| (mask >> i) & 1).collect();
                for &(a, b) in &net {
                    if v[a] > v[b] {
                        v.swap(a, b);
                    }
                }
                assert!(v.windows(2).all(|p| p[0] <= p[1]), "n={n} mask={mask:b}");
            }
        }
    }

    #[test]
    fn shearsort_zero_one_exhaustive_w4() {
        let c = cfg(4);
        for mask in 0u32..(1 << 16) {
            let tile: Vec<Key> = (0..16).map(|i| Key::from((mask >> i) & 1)).collect();
            let out = shearsort_tile(&tile, &c, &mut Metrics::default()).unwrap();
            assert!(out.windows(2).all(|p| p[0] <= p[1]), "mask={mask:b}");
        }
    }

    #[test]
    fn sorted_tile_is_fixed_point() {
        let c = cfg(4);
        // Row-major ascending grid laid out column-major.
        let mut tile = vec![0; 16];
        for r in 0..4 {
            for col in 0..4 {
                tile[col * 4 + r] = (r * 4 + col) as Key;
            }
        }
        let mut m = Metrics::default();
        let out = shearsort_tile(&tile, &c, &mut m).unwrap();
        assert_eq!(out, (0..16).collect::<Vec<Key>>());
        assert_eq!(m.conflict_passes, 0);
    }

    #[test]
    fn w4_random_tile_and_phase_count() {
        let c = cfg(4);
        let tile = shuffled(16, 11);
        let mut m = Metrics::default();
        let out = shearsort_tile(&tile, &c, &mut m).unwrap();
        assert_eq!(out, (0..16).collect::<Vec<Key>>());
        // 2 phases of rows + columns, then the final rows: 5 network passes
        // of 5 comparators on 4 lanes.
        assert_eq!(m.compare_exchanges, 5 * 5 * 4);
        assert_eq!(m.shared_accesses, 5 * 5 + 2 * 4);
    }

    #[test]
    fn wrong_tile_size_rejected() {
        let c = cfg(4);
        assert!(matches!(
            shearsort_tile(&[1, 2, 3], &c, &mut Metrics::default()),
            Err(Error::TileSize { expected: 16, got: 3 })
        ));
    }

    #[test]
    fn w32_conflict_free_and_input_independent() {
        let c = cfg(32);
        let mut m1 = Metrics::default();
        let mut m2 = Metrics::default();
        let a = shearsort_tile(&shuffled(1024, 3), &c, &mut m1).unwrap();
        let mut rev: Vec<Key> = (0..1024).rev().collect();
        let b = shearsort_tile(&rev, &c, &mut m2).unwrap();
        rev.sort();
        assert_eq!(a, rev);
        assert_eq!(b, rev);
        assert_eq!(m1.conflict_passes, 0);
        assert_eq!(m1, m2);
        assert_eq!(m1.compare_exchanges, 11 * 191 * 32);
    }

    #[test]
    fn effective_base_prefers_fewer_rounds() {
        let c = MachineConfig::default();
        // 2^12 keys, K=4: base 1024 gives 1 round, 4096 gives none.
        assert_eq!(effective_base(1 << 12, 4, &c), 4096);
        // 2^20, K=4: 1024 runs -> 5 rounds, 512 runs -> 5, 256 runs -> 4.
        assert_eq!(effective_base(1 << 20, 4, &c), 4096);
        let fixed = MachineConfig { base_limit: 1024, ..c };
        assert_eq!(effective_base(1 << 20, 4, &fixed), 1024);
        // 2^21, K=4: 2048 runs -> 6, 1024 -> 5, 512 -> 5.
        assert_eq!(effective_base(1 << 21, 4, &c), 2048);
    }

    #[test]
    fn single_tile_run() {
        let c = MachineConfig::default();
        let data = shuffled(1024, 5);
        let mut m = Metrics::default();
        let runs = base_case_sort(&data, 1024, &c, &mut m).unwrap();
        assert_eq!(runs.count(), 1);
        assert_eq!(runs.keys, (0..1024).collect::<Vec<Key>>());
        assert_eq!(m.global_block_reads, 32);
        assert_eq!(m.global_block_writes, 32);
        assert_eq!(m.conflict_passes, 0);
    }

    #[test]
    fn doubled_runs_and_short_tail() {
        let c = cfg(4);
        let data = shuffled(16 * 4 * 3 + 7, 9);
        let mut m = Metrics::default();
        let runs = base_case_sort(&data, 64, &c, &mut m).unwrap();
        assert_eq!(runs.count(), 4);
        for (i, run) in runs.iter().enumerate() {
            let mut expect = data[i * 64..(i * 64 + 64).min(data.len())].to_vec();
            expect.sort();
            assert_eq!(run, &expect[..]);
        }
        assert_eq!(m.conflict_passes, 0);
    }

    #[test]
    fn base_smaller_than_tile() {
        let c = MachineConfig::default();
        let data = shuffled(2000, 2);
        let mut m = Metrics::default();
        let runs = base_case_sort(&data, 512, &c, &mut m).unwrap();
        assert_eq!(runs.count(), 4);
        for run in runs.iter() {
            assert!(run.windows(2).all(|p| p[0] <= p[1]));
        }
        assert_eq!(m.global_block_reads, 63);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shearsort_w32_sorts(keys in prop::collection::vec(any::<u64>(), 1024)) {
            let c = cfg(32);
            let mut m = Metrics::default();
            let out = shearsort_tile(&keys, &c, &mut m).unwrap();
            let mut expect = keys.clone();
            expect.sort();
            prop_assert_eq!(out, expect);
            prop_assert_eq!(m.conflict_passes, 0);
        }

        #[test]
        fn base_case_runs_sorted(
            w_exp in 1u32..=3,
            base_exp in 0u32..=3,
            len in 1usize..600,
            seed in any::<u64>(),
        ) {
            let w = 1usize << w_exp;
            let base = (w * w) << base_exp;
            let c = MachineConfig { base_size: base, base_limit: base, ..MachineConfig::with_width(w) };
            let data = shuffled(len, seed);
            let mut m = Metrics::default();
            let runs = base_case_sort(&data, base, &c, &mut m).unwrap();
            for (i, run) in runs.iter().enumerate() {
                let mut expect = data[i * base..(i * base + base).min(len)].to_vec();
                expect.sort();
                prop_assert_eq!(run, &expect[..]);
            }
            prop_assert_eq!(m.conflict_passes, 0);
        }
    }
}
