//! End-to-end sorters: multiway mergesort and the pairwise Merge Path
//! baseline.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::basecase::{base_case_sort, effective_base};
use crate::blockheap::merge_into;
use crate::error::{Error, Result};
use crate::machine::{Direction, MachineConfig, Metrics};
use crate::selection::make_partition_plan;
use crate::Key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Mms,
    Pairwise,
}

impl Algorithm {
    pub const ALL: [Algorithm; 2] = [Algorithm::Mms, Algorithm::Pairwise];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Mms => "mms",
            Algorithm::Pairwise => "pairwise",
        }
    }

    /// Lists merged per round.
    pub fn fan_in(self, cfg: &MachineConfig) -> usize {
        match self {
            Algorithm::Mms => cfg.branch_factor,
            Algorithm::Pairwise => 2,
        }
    }

    pub fn sort(self, data: &[Key], cfg: &MachineConfig) -> Result<SortResult> {
        match self {
            Algorithm::Mms => mms_sort(data, cfg),
            Algorithm::Pairwise => pairwise_sort_baseline(data, cfg),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mms" => Ok(Algorithm::Mms),
            "pairwise" => Ok(Algorithm::Pairwise),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Output and counters of one sort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortResult {
    pub algorithm: Algorithm,
    pub keys: Vec<Key>,
    /// Totals: `base_metrics` plus every entry of `rounds`.
    pub metrics: Metrics,
    pub base_metrics: Metrics,
    pub rounds: Vec<Metrics>,
    /// Base run length used after doubling.
    pub base: usize,
    pub n: usize,
    pub config: MachineConfig,
}

fn finish(
    algorithm: Algorithm,
    keys: Vec<Key>,
    base_metrics: Metrics,
    rounds: Vec<Metrics>,
    base: usize,
    config: &MachineConfig,
) -> SortResult {
    let metrics = base_metrics + rounds.iter().sum::<Metrics>();
    SortResult { algorithm, n: keys.len(), keys, metrics, base_metrics, rounds, base, config: *config }
}

fn check_input(data: &[Key], cfg: &MachineConfig) -> Result<()> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot sort an empty sequence".into()));
    }
    Ok(())
}

/// Warps given to a merge of `len` out of `n` keys.
fn warps_for(len: usize, n: usize, cfg: &MachineConfig) -> usize {
    (cfg.num_warps * len / n).max(1)
}

/// Multiway mergesort: shearsort runs, then rounds of `K`-way merges in
/// which every warp merges one partition through its own block heap.
pub fn mms_sort(data: &[Key], cfg: &MachineConfig) -> Result<SortResult> {
    check_input(data, cfg)?;
    let n = data.len();
    let k = cfg.branch_factor;
    let base = effective_base(n, k, cfg);
    let mut base_metrics = Metrics::default();
    let runs = base_case_sort(data, base, cfg, &mut base_metrics)?;
    let mut keys = runs.keys;
    let mut run_len = base;
    let mut rounds = Vec::new();

    while run_len < n {
        let group_len = run_len * k;
        let merged: Vec<(Vec<Key>, Metrics)> = keys
            .par_chunks(group_len)
            .map(|group| merge_group(group, run_len, cfg, warps_for(group.len(), n, cfg)))
            .collect::<Result<_>>()?;
        let mut round = Metrics { merge_rounds: 1, ..Metrics::default() };
        let mut next = Vec::with_capacity(n);
        for (out, m) in merged {
            next.extend_from_slice(&out);
            round += m;
        }
        keys = next;
        rounds.push(round);
        run_len = group_len;
    }
    Ok(finish(Algorithm::Mms, keys, base_metrics, rounds, base, cfg))
}

fn merge_group(group: &[Key], run_len: usize, cfg: &MachineConfig, warps: usize) -> Result<(Vec<Key>, Metrics)> {
    let lists: Vec<&[Key]> = group.chunks(run_len).collect();
    let mut metrics = Metrics::default();
    let plan = make_partition_plan(&lists, warps, &mut metrics)?;
    let parts: Vec<(Vec<Key>, Metrics)> = plan
        .ranges
        .par_iter()
        .map(|ranges| {
            let sub: Vec<&[Key]> = lists.iter().zip(ranges).map(|(l, r)| &l[r.clone()]).collect();
            let mut out = vec![0; ranges.iter().map(|r| r.len()).sum()];
            let mut m = Metrics::default();
            merge_into(&sub, &mut out, cfg, &mut m)?;
            Ok((out, m))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(group.len());
    for (part, m) in parts {
        out.extend_from_slice(&part);
        metrics += m;
    }
    Ok((out, metrics))
}

/// Split of a two-list merge at diagonal `i + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergePathPivot {
    pub i: usize,
    pub j: usize,
}

/// Finds how many of the first `d` merged outputs come from `a` and from `b`,
/// elements of `a` winning ties.
pub fn merge_path_pivot(a: &[Key], b: &[Key], d: usize) -> MergePathPivot {
    pivot_with_steps(a, b, d).0
}

fn pivot_with_steps(a: &[Key], b: &[Key], d: usize) -> (MergePathPivot, u64) {
    assert!(d <= a.len() + b.len(), "diagonal {d} past the end of the merge");
    let mut lo = d.saturating_sub(b.len());
    let mut hi = d.min(a.len());
    let mut steps = 0;
    while lo < hi {
        let mid = (lo + hi) / 2;
        if a[mid] <= b[d - 1 - mid] {
            lo = mid + 1;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    (MergePathPivot { i: lo, j: d - lo }, steps)
}

/// Binary-search steps charged for a global pivot search at diagonal `d`:
/// the worst case over inputs of these sizes.
fn pivot_probe_bound(a_len: usize, b_len: usize, d: usize) -> u64 {
    let range = d.min(a_len) - d.saturating_sub(b_len);
    u64::from(usize::BITS - range.leading_zeros())
}

/// Merges the first `out_len` keys of `a` and `b` as one warp tile and
/// appends them to `out`.
///
/// `a` and `b` are the tile's shared-memory windows, each of capacity `W·L`:
/// `a[x]` lives at word `x` and `b[y]` at word `W·L + y`. Lane `t` finds its
/// start on diagonal `t·L` (broadcast reads), then merges up to `L` outputs
/// serially: it loads the heads of both lists, and after each output loads
/// the next key from the side it consumed. Every load step is one traced
/// warp access. Returns how many keys were taken from `a` and from `b`.
pub fn trace_tile_merge(
    a: &[Key],
    b: &[Key],
    out_len: usize,
    cfg: &MachineConfig,
    metrics: &mut Metrics,
    out: &mut Vec<Key>,
) -> MergePathPivot {
    let w = cfg.warp_width;
    let l = cfg.thread_merge_len;
    let cap = w * l;
    assert!(a.len() <= cap && b.len() <= cap, "window exceeds tile capacity");
    assert!(out_len <= cap && out_len <= a.len() + b.len(), "tile output too long");

    let mut pos = vec![(0usize, 0usize); w];
    let mut count = vec![0usize; w];
    let mut search_steps = 0;
    for t in 0..w {
        let d = (t * l).min(out_len);
        let (p, steps) = pivot_with_steps(a, b, d);
        pos[t] = (p.i, p.j);
        count[t] = (out_len - d).min(l);
        search_steps = search_steps.max(steps);
    }
    let mut lanes = vec![Some(0u64); w];
    for _ in 0..search_steps {
        metrics.charge_shared(&lanes, cfg);
    }

    let a_word = |x: usize| (x < a.len()).then_some(x as u64);
    let b_word = |y: usize| (y < b.len()).then_some((cap + y) as u64);
    for t in 0..w {
        lanes[t] = if count[t] > 0 { a_word(pos[t].0) } else { None };
    }
    metrics.charge_shared(&lanes, cfg);
    for t in 0..w {
        lanes[t] = if count[t] > 0 { b_word(pos[t].1) } else { None };
    }
    metrics.charge_shared(&lanes, cfg);

    let start = out.len();
    out.resize(start + out_len, 0);
    for s in 0..l {
        for t in 0..w {
            lanes[t] = None;
            if s >= count[t] {
                continue;
            }
            let (i, j) = &mut pos[t];
            let take_a = *j >= b.len() || (*i < a.len() && a[*i] <= b[*j]);
            out[start + t * l + s] = if take_a { a[*i] } else { b[*j] };
            metrics.compare_exchanges += 1;
            if s + 1 < count[t] {
                lanes[t] = if take_a {
                    *i += 1;
                    a_word(*i)
                } else {
                    *j += 1;
                    b_word(*j)
                };
            } else if take_a {
                *i += 1;
            } else {
                *j += 1;
            }
        }
        if s + 1 < l {
            metrics.charge_shared(&lanes, cfg);
        }
    }
    merge_path_pivot(a, b, out_len)
}

/// Pairwise mergesort in the style of Merge Path GPU sorts: runs are merged
/// two at a time, each merge split across warps by global pivot searches and
/// streamed through shared-memory tiles of `W·L` outputs.
pub fn pairwise_sort_baseline(data: &[Key], cfg: &MachineConfig) -> Result<SortResult> {
    check_input(data, cfg)?;
    let n = data.len();
    let base = effective_base(n, 2, cfg);
    let mut base_metrics = Metrics::default();
    let runs = base_case_sort(data, base, cfg, &mut base_metrics)?;
    let mut keys = runs.keys;
    let mut run_len = base;
    let mut rounds = Vec::new();

    while run_len < n {
        let merged: Vec<(Vec<Key>, Metrics)> = keys
            .par_chunks(2 * run_len)
            .map(|pair| {
                let mut m = Metrics::default();
                if pair.len() <= run_len {
                    m.charge_global(pair.len(), Direction::Read, cfg);
                    m.charge_global(pair.len(), Direction::Write, cfg);
                    return (pair.to_vec(), m);
                }
                let (a, b) = pair.split_at(run_len);
                let out = merge_pair(a, b, cfg, warps_for(pair.len(), n, cfg), &mut m);
                (out, m)
            })
            .collect();
        let mut round = Metrics { merge_rounds: 1, ..Metrics::default() };
        let mut next = Vec::with_capacity(n);
        for (out, m) in merged {
            next.extend_from_slice(&out);
            round += m;
        }
        keys = next;
        rounds.push(round);
        run_len *= 2;
    }
    Ok(finish(Algorithm::Pairwise, keys, base_metrics, rounds, base, cfg))
}

/// Output offsets at which each warp of a pairwise merge starts.
pub fn warp_diagonals(total: usize, warps: usize) -> Vec<usize> {
    let step = total.div_ceil(warps);
    (0..=warps).map(|p| (p * step).min(total)).collect()
}

fn merge_pair(a: &[Key], b: &[Key], cfg: &MachineConfig, warps: usize, metrics: &mut Metrics) -> Vec<Key> {
    let total = a.len() + b.len();
    let diagonals = warp_diagonals(total, warps);
    let splits: Vec<MergePathPivot> = diagonals
        .iter()
        .enumerate()
        .map(|(p, &d)| {
            if p > 0 && p < warps {
                for _ in 0..pivot_probe_bound(a.len(), b.len(), d) {
                    metrics.charge_probe();
                }
            }
            merge_path_pivot(a, b, d)
        })
        .collect();

    let parts: Vec<(Vec<Key>, Metrics)> = splits
        .par_windows(2)
        .map(|w| {
            let mut m = Metrics::default();
            let out = merge_warp(&a[w[0].i..w[1].i], &b[w[0].j..w[1].j], cfg, &mut m);
            (out, m)
        })
        .collect();
    let mut out = Vec::with_capacity(total);
    for (part, m) in parts {
        out.extend_from_slice(&part);
        *metrics += m;
    }
    out
}

fn merge_warp(a: &[Key], b: &[Key], cfg: &MachineConfig, metrics: &mut Metrics) -> Vec<Key> {
    let cap = cfg.merge_tile_keys();
    let total = a.len() + b.len();
    let mut out = Vec::with_capacity(total);
    let (mut i, mut j) = (0, 0);
    while i + j < total {
        let out_len = (total - i - j).min(cap);
        let a_win = &a[i..(i + cap).min(a.len())];
        let b_win = &b[j..(j + cap).min(b.len())];
        metrics.charge_global(out_len, Direction::Read, cfg);
        let taken = trace_tile_merge(a_win, b_win, out_len, cfg, metrics, &mut out);
        metrics.charge_global(out_len, Direction::Write, cfg);
        i += taken.i;
        j += taken.j;
    }
    out
}
