//! Multisequence selection and per-warp partition plans.
//!
//! Elements are compared by `(key, list index, position)`, so every element
//! is distinct even when keys repeat and a rank determines a unique split.

use std::collections::HashSet;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::machine::Metrics;
use crate::Key;

/// Per-list split indices realizing a global rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splitters {
    pub cuts: Vec<usize>,
}

impl Splitters {
    pub fn rank(&self) -> usize {
        self.cuts.iter().sum()
    }
}

/// Per-warp, per-list half-open ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub ranges: Vec<Vec<Range<usize>>>,
}

impl PartitionPlan {
    pub fn warps(&self) -> usize {
        self.ranges.len()
    }

    pub fn partition_len(&self, warp: usize) -> usize {
        self.ranges[warp].iter().map(ExactSizeIterator::len).sum()
    }
}

struct Prober<'a> {
    lists: &'a [&'a [Key]],
    seen: HashSet<(usize, usize)>,
    metrics: &'a mut Metrics,
}

impl Prober<'_> {
    fn read(&mut self, list: usize, pos: usize) -> (Key, usize, usize) {
        if self.seen.insert((list, pos)) {
            self.metrics.charge_probe();
        }
        (self.lists[list][pos], list, pos)
    }
}

fn is_sorted(list: &[Key]) -> bool {
    list.windows(2).all(|w| w[0] <= w[1])
}

/// Finds cuts such that the `rank` smallest elements across `lists` are
/// exactly the prefixes `lists[i][..cuts[i]]`.
///
/// Works top-down over sample strides `s = 2^j`: at each stride it holds the
/// exact selection among the sampled elements (positions `s-1, 2s-1, ...`),
/// refines it to stride `s/2` with one probe per list, then corrects the few
/// remaining lists by merging boundary samples. Probes are charged to
/// `metrics`; repeated reads of one position are charged once.
pub fn select_across_lists(lists: &[&[Key]], rank: usize, metrics: &mut Metrics) -> Splitters {
    debug_assert!(lists.iter().all(|l| is_sorted(l)), "selection input must be sorted");
    select_unchecked(lists, rank, metrics)
}

fn select_unchecked(lists: &[&[Key]], rank: usize, metrics: &mut Metrics) -> Splitters {
    let total: usize = lists.iter().map(|l| l.len()).sum();
    assert!(rank <= total, "rank {rank} exceeds total length {total}");
    if rank == 0 {
        return Splitters { cuts: vec![0; lists.len()] };
    }
    if rank == total {
        return Splitters { cuts: lists.iter().map(|l| l.len()).collect() };
    }

    let max_len = lists.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut prober = Prober { lists, seen: HashSet::new(), metrics };
    let mut selected = vec![0usize; lists.len()];
    let mut stride = (max_len + 1).next_power_of_two();

    while stride > 1 {
        let coarse = stride;
        stride /= 2;

        // Largest selected sample at the coarse stride.
        let mut pivot = None;
        for (i, &k) in selected.iter().enumerate() {
            if k > 0 {
                let e = prober.read(i, k * coarse - 1);
                if pivot.is_none_or(|p| e > p) {
                    pivot = Some(e);
                }
            }
        }

        for (i, k) in selected.iter_mut().enumerate() {
            let mid = (2 * *k + 1) * stride - 1;
            *k *= 2;
            if let Some(p) = pivot {
                if mid < lists[i].len() && prober.read(i, mid) < p {
                    *k += 1;
                }
            }
        }

        let samples: usize = lists.iter().map(|l| l.len() / stride).sum();
        let target = (rank / stride).min(samples);
        let mut current: usize = selected.iter().sum();

        while current < target {
            let mut best: Option<(Key, usize, usize)> = None;
            for i in 0..lists.len() {
                let pos = (selected[i] + 1) * stride - 1;
                if pos < lists[i].len() {
                    let e = prober.read(i, pos);
                    if best.is_none_or(|b| e < b) {
                        best = Some(e);
                    }
                }
            }
            let (_, list, _) = best.expect("target never exceeds sample count");
            selected[list] += 1;
            current += 1;
        }
        while current > target {
            let mut best: Option<(Key, usize, usize)> = None;
            for (i, &k) in selected.iter().enumerate() {
                if k > 0 {
                    let e = prober.read(i, k * stride - 1);
                    if best.is_none_or(|b| e > b) {
                        best = Some(e);
                    }
                }
            }
            let (_, list, _) = best.expect("current is positive");
            selected[list] -= 1;
            current -= 1;
        }
    }

    Splitters { cuts: selected }
}

/// Splits `lists` into `warps` non-overlapping partitions at ranks
/// `p * ceil(total / warps)`; the last partition takes the remainder.
pub fn make_partition_plan(lists: &[&[Key]], warps: usize, metrics: &mut Metrics) -> Result<PartitionPlan> {
    if warps == 0 {
        return Err(Error::NoPartitions);
    }
    debug_assert!(lists.iter().all(|l| is_sorted(l)), "partition input must be sorted");
    let total: usize = lists.iter().map(|l| l.len()).sum();
    let step = total.div_ceil(warps);

    let mut bounds = Vec::with_capacity(warps + 1);
    bounds.push(vec![0; lists.len()]);
    for p in 1..warps {
        let rank = (p * step).min(total);
        bounds.push(select_unchecked(lists, rank, metrics).cuts);
    }
    bounds.push(lists.iter().map(|l| l.len()).collect());

    let ranges = bounds
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(&s, &e)| s..e).collect())
        .collect();
    Ok(PartitionPlan { ranges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Reference: tag every element, sort by the tie-broken order, count the
    // first `rank` per list.
    fn oracle(lists: &[&[Key]], rank: usize) -> Vec<usize> {
        let mut all: Vec<(Key, usize, usize)> = lists
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().enumerate().map(move |(p, &k)| (k, i, p)))
            .collect();
        all.sort();
        let mut cuts = vec![0; lists.len()];
        for &(_, i, _) in &all[..rank] {
            cuts[i] += 1;
        }
        cuts
    }

    #[test]
    fn two_lists_rank_three() {
        let a = [1, 3, 5];
        let b = [2, 4, 6];
        let mut m = Metrics::default();
        let s = select_across_lists(&[&a, &b], 3, &mut m);
        assert_eq!(s.cuts, vec![2, 1]);
        assert!(m.partition_probes > 0);
        assert_eq!(m.partition_probes, m.global_block_reads);
    }

    #[test]
    fn extreme_ranks() {
        let a = [1, 2, 9];
        let b = [0, 5];
        let mut m = Metrics::default();
        assert_eq!(select_across_lists(&[&a, &b], 0, &mut m).cuts, vec![0, 0]);
        assert_eq!(select_across_lists(&[&a, &b], 5, &mut m).cuts, vec![3, 2]);
        assert_eq!(m.partition_probes, 0);
    }

    #[test]
    fn ties_break_by_list_index() {
        let a = [7, 7, 7];
        let b = [7, 7];
        let mut m = Metrics::default();
        assert_eq!(select_across_lists(&[&a, &b], 4, &mut m).cuts, vec![3, 1]);
        assert_eq!(select_across_lists(&[&a, &b], 2, &mut m).cuts, vec![2, 0]);
    }

    #[test]
    fn empty_lists_are_fine() {
        let a: [Key; 0] = [];
        let b = [3, 4];
        let mut m = Metrics::default();
        assert_eq!(select_across_lists(&[&a, &b, &a], 1, &mut m).cuts, vec![0, 1, 0]);
    }

    #[test]
    fn plan_single_warp_has_no_probes() {
        let a = [1, 3];
        let b = [2];
        let mut m = Metrics::default();
        let plan = make_partition_plan(&[&a, &b], 1, &mut m).unwrap();
        assert_eq!(plan.ranges, vec![vec![0..2, 0..1]]);
        assert_eq!(m, Metrics::default());
    }

    #[test]
    fn plan_two_warps() {
        let a = [1, 3, 5, 7];
        let b = [2, 4, 6, 8];
        let mut m = Metrics::default();
        let plan = make_partition_plan(&[&a, &b], 2, &mut m).unwrap();
        assert_eq!(plan.ranges, vec![vec![0..2, 0..2], vec![2..4, 2..4]]);
    }

    #[test]
    fn plan_rejects_zero_warps() {
        let mut m = Metrics::default();
        assert!(matches!(make_partition_plan(&[], 0, &mut m), Err(Error::NoPartitions)));
    }

    #[test]
    fn plan_four_lists_eight_warps() {
        let lists: Vec<Vec<Key>> = (0..4).map(|i| (0..256).map(|x| x * 4 + i).collect()).collect();
        let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
        let mut m = Metrics::default();
        let plan = make_partition_plan(&refs, 8, &mut m).unwrap();
        for p in 0..8 {
            assert_eq!(plan.partition_len(p), 128);
        }
        // Brute-force non-overlap: every element of an earlier partition
        // precedes every element of a later one.
        let refs = &refs;
        let elems = |p: usize| -> Vec<(Key, usize, usize)> {
            plan.ranges[p]
                .iter()
                .enumerate()
                .flat_map(|(i, r)| r.clone().map(move |pos| (refs[i][pos], i, pos)))
                .collect()
        };
        for p in 0..7 {
            let max_p = elems(p).into_iter().max().unwrap();
            for q in p + 1..8 {
                assert!(elems(q).into_iter().all(|e| e > max_p));
            }
        }
    }

    #[test]
    fn exhaustive_small_lists() {
        // Every length combination up to 6 over three lists, keys drawn from
        // a tiny domain so ties are common.
        let mut seed = 12345u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) % 5
        };
        for la in 0..=6 {
            for lb in 0..=6 {
                for lc in 0..=6 {
                    let mut lists: Vec<Vec<Key>> =
                        [la, lb, lc].iter().map(|&n| (0..n).map(|_| next()).collect()).collect();
                    lists.iter_mut().for_each(|l| l.sort());
                    let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
                    for r in 0..=la + lb + lc {
                        let mut m = Metrics::default();
                        assert_eq!(select_across_lists(&refs, r, &mut m).cuts, oracle(&refs, r));
                    }
                }
            }
        }
    }

    fn sorted_lists(max_k: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<Key>>> {
        prop::collection::vec(prop::collection::vec(0u64..64, 0..=max_len), 1..=max_k).prop_map(|mut ls| {
            ls.iter_mut().for_each(|l| l.sort());
            ls
        })
    }

    proptest! {
        #[test]
        fn matches_oracle_with_bounded_probes(lists in sorted_lists(8, 64), frac in 0.0f64..=1.0) {
            let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
            let total: usize = refs.iter().map(|l| l.len()).sum();
            let r = ((total as f64) * frac).round() as usize;
            let mut m = Metrics::default();
            let s = select_across_lists(&refs, r, &mut m);
            prop_assert_eq!(s.rank(), r);
            prop_assert_eq!(&s.cuts, &oracle(&refs, r));
            let max_len = refs.iter().map(|l| l.len()).max().unwrap_or(0);
            let bound = 4.0 * refs.len() as f64 * ((max_len + 1) as f64).log2().max(1.0);
            prop_assert!((m.partition_probes as f64) <= bound,
                "{} probes over bound {}", m.partition_probes, bound);
        }

        #[test]
        fn plan_tiles_lists_and_concatenates_sorted(lists in sorted_lists(6, 40), warps in 1usize..10) {
            let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
            let total: usize = refs.iter().map(|l| l.len()).sum();
            let mut m = Metrics::default();
            let plan = make_partition_plan(&refs, warps, &mut m).unwrap();
            prop_assert_eq!(plan.warps(), warps);
            for (i, list) in refs.iter().enumerate() {
                prop_assert_eq!(plan.ranges[0][i].start, 0);
                prop_assert_eq!(plan.ranges[warps - 1][i].end, list.len());
                for p in 0..warps - 1 {
                    prop_assert_eq!(plan.ranges[p][i].end, plan.ranges[p + 1][i].start);
                }
            }
            let step = total.div_ceil(warps);
            for p in 0..warps {
                prop_assert!(plan.partition_len(p).abs_diff(step) <= warps);
            }
            let mut concat = Vec::new();
            for p in 0..warps {
                let mut part: Vec<Key> = plan.ranges[p]
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| refs[i][r.clone()].iter().copied())
                    .collect();
                part.sort();
                concat.extend(part);
            }
            let mut all: Vec<Key> = lists.concat();
            all.sort();
            prop_assert_eq!(concat, all);
        }
    }
}
