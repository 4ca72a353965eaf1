//! The min-block-heap: a binary heap whose nodes each hold `B` sorted keys.
//!
//! Nodes live in shared memory in implicit layout (node `v` at words
//! `v*B .. v*B + B`, children `2v+1` and `2v+2`). Moving a block into or out of
//! a node is one warp instruction with lane `i` on word `i` of the node.
//! Merging two blocks runs a bitonic network in registers and costs no
//! shared traffic.

use crate::error::{Error, Result};
use crate::machine::{Direction, MachineConfig, Metrics};
use crate::{Key, SENTINEL};

/// A full block of `B` ascending keys, sentinel-padded at the tail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    keys: Vec<Key>,
}

impl Block {
    /// Pads `keys` with sentinels up to `capacity`.
    pub fn new(keys: &[Key], capacity: usize) -> Self {
        assert!(keys.len() <= capacity, "block overflow");
        debug_assert!(keys.windows(2).all(|w| w[0] <= w[1]), "block keys must be sorted");
        let mut v = Vec::with_capacity(capacity);
        v.extend_from_slice(keys);
        v.resize(capacity, SENTINEL);
        Self { keys: v }
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn first(&self) -> Key {
        self.keys[0]
    }

    pub fn last(&self) -> Key {
        self.keys[self.keys.len() - 1]
    }
}

/// Merges blocks `a` and `b`: returns the `B` smallest and the `B` largest
/// of their keys, both sorted.
pub fn merge_split(a: &Block, b: &Block, metrics: &mut Metrics) -> (Block, Block) {
    assert_eq!(a.keys.len(), b.keys.len(), "blocks must have equal capacity");
    let mut low = a.keys.clone();
    let mut high = b.keys.clone();
    bitonic_merge_split(&mut low, &mut high, metrics);
    (Block { keys: low }, Block { keys: high })
}

/// In-place bitonic merge of two sorted halves of equal power-of-two length.
/// Afterwards `low` holds the smaller half and `high` the larger, both
/// ascending. Charges `len * log2(2 len)` compare-exchanges.
pub(crate) fn bitonic_merge_split(low: &mut [Key], high: &mut [Key], metrics: &mut Metrics) {
    let b = low.len();
    debug_assert_eq!(b, high.len());
    debug_assert!(b.is_power_of_two());
    debug_assert!(low.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(high.windows(2).all(|w| w[0] <= w[1]));

    high.reverse();
    for (x, y) in low.iter_mut().zip(high.iter_mut()) {
        if *x > *y {
            std::mem::swap(x, y);
        }
    }
    let mut exchanges = b as u64;
    exchanges += half_clean(low);
    exchanges += half_clean(high);
    metrics.compare_exchanges += exchanges;
}

// Sorts a bitonic sequence with half-cleaner stages of decreasing stride.
fn half_clean(seq: &mut [Key]) -> u64 {
    let mut exchanges = 0;
    let mut stride = seq.len() / 2;
    while stride > 0 {
        for chunk in seq.chunks_mut(2 * stride) {
            let (lo, hi) = chunk.split_at_mut(stride);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                if *x > *y {
                    std::mem::swap(x, y);
                }
            }
            exchanges += stride as u64;
        }
        stride /= 2;
    }
    exchanges
}

#[derive(Debug, Clone)]
struct LeafCursor<'a> {
    list: &'a [Key],
    next: usize,
}

impl LeafCursor<'_> {
    fn remaining(&self) -> usize {
        self.list.len() - self.next
    }
}

/// Warp-private K-way merging engine.
#[derive(Debug, Clone)]
pub struct MinBlockHeap<'a> {
    cfg: MachineConfig,
    leaves: usize,
    nodes: Vec<Key>,
    full: Vec<bool>,
    cursors: Vec<LeafCursor<'a>>,
    pending: usize,
    low_buf: Vec<Key>,
    high_buf: Vec<Key>,
    lane_buf: Vec<Option<u64>>,
}

impl<'a> MinBlockHeap<'a> {
    /// Assigns each list to a leaf and fills the heap bottom-up. Leaves
    /// without a list hold sentinel blocks.
    pub fn build(lists: &[&'a [Key]], cfg: &MachineConfig, metrics: &mut Metrics) -> Result<Self> {
        let k = cfg.branch_factor;
        if lists.len() > k {
            return Err(Error::TooManyLists { max: k, got: lists.len() });
        }
        let b = cfg.block_size;
        let node_count = 2 * k - 1;
        let mut cursors: Vec<LeafCursor<'a>> = lists.iter().map(|&list| LeafCursor { list, next: 0 }).collect();
        cursors.resize(k, LeafCursor { list: &[], next: 0 });
        let mut heap = Self {
            cfg: *cfg,
            leaves: k,
            nodes: vec![SENTINEL; node_count * b],
            full: vec![false; node_count],
            cursors,
            pending: lists.iter().map(|l| l.len()).sum(),
            low_buf: vec![0; b],
            high_buf: vec![0; b],
            lane_buf: vec![None; cfg.warp_width],
        };
        for leaf in k - 1..node_count {
            heap.fill_empty_node(leaf, metrics);
        }
        for v in (0..k - 1).rev() {
            heap.fill_empty_node(v, metrics);
        }
        Ok(heap)
    }

    /// Keys not yet popped.
    pub fn pending(&self) -> usize {
        self.pending
    }

    pub fn node(&self, v: usize) -> Option<&[Key]> {
        let b = self.cfg.block_size;
        self.full[v].then(|| &self.nodes[v * b..(v + 1) * b])
    }

    fn is_leaf(&self, v: usize) -> bool {
        v >= self.leaves - 1
    }

    fn charge_node(&mut self, v: usize, metrics: &mut Metrics) {
        let b = self.cfg.block_size as u64;
        for (lane, slot) in self.lane_buf.iter_mut().enumerate() {
            *slot = Some(v as u64 * b + lane as u64);
        }
        metrics.charge_shared(&self.lane_buf, &self.cfg);
    }

    /// Fills empty node `v`. An internal node takes the smaller half of its
    /// children's merged blocks; the child with the larger last key keeps
    /// the larger half (the left child on ties) and the other child is
    /// refilled recursively. A leaf reads its next block from global memory.
    pub fn fill_empty_node(&mut self, mut v: usize, metrics: &mut Metrics) {
        let b = self.cfg.block_size;
        loop {
            debug_assert!(!self.full[v], "node {v} is not empty");
            if self.is_leaf(v) {
                self.refill_leaf(v, metrics);
                return;
            }
            let (u, w) = (2 * v + 1, 2 * v + 2);
            debug_assert!(self.full[u] && self.full[w], "children of {v} must be full");
            self.charge_node(u, metrics);
            self.charge_node(w, metrics);

            let (keeper, emptied) = if self.nodes[u * b + b - 1] >= self.nodes[w * b + b - 1] {
                (u, w)
            } else {
                (w, u)
            };
            self.low_buf.copy_from_slice(&self.nodes[u * b..(u + 1) * b]);
            self.high_buf.copy_from_slice(&self.nodes[w * b..(w + 1) * b]);
            bitonic_merge_split(&mut self.low_buf, &mut self.high_buf, metrics);
            self.nodes[v * b..(v + 1) * b].copy_from_slice(&self.low_buf);
            self.nodes[keeper * b..(keeper + 1) * b].copy_from_slice(&self.high_buf);
            self.charge_node(v, metrics);
            self.charge_node(keeper, metrics);

            self.full[v] = true;
            self.full[emptied] = false;
            v = emptied;
        }
    }

    fn refill_leaf(&mut self, v: usize, metrics: &mut Metrics) {
        let b = self.cfg.block_size;
        let cursor = &mut self.cursors[v - (self.leaves - 1)];
        let take = cursor.remaining().min(b);
        let slot = &mut self.nodes[v * b..(v + 1) * b];
        slot[..take].copy_from_slice(&cursor.list[cursor.next..cursor.next + take]);
        slot[take..].fill(SENTINEL);
        cursor.next += take;
        self.full[v] = true;
        if take > 0 {
            metrics.charge_global(take, Direction::Read, &self.cfg);
            self.charge_node(v, metrics);
        }
    }

    /// Removes the root block and writes it out; returns `None` once every
    /// key has been emitted. The final block is returned without padding.
    pub fn pop_block(&mut self, metrics: &mut Metrics) -> Option<Vec<Key>> {
        if self.pending == 0 {
            return None;
        }
        let b = self.cfg.block_size;
        let emit = self.pending.min(b);
        self.charge_node(0, metrics);
        let out = self.nodes[..emit].to_vec();
        metrics.charge_global(emit, Direction::Write, &self.cfg);
        self.pending -= emit;
        self.full[0] = false;
        if self.pending > 0 {
            self.fill_empty_node(0, metrics);
        }
        Some(out)
    }

    /// Heap order over all full nodes: every node's last key is at most its
    /// full children's first keys, and each node is sorted.
    pub fn check_heap_property(&self) -> bool {
        let b = self.cfg.block_size;
        let count = 2 * self.leaves - 1;
        (0..count).all(|v| {
            let Some(node) = self.node(v) else { return true };
            if node.windows(2).any(|w| w[0] > w[1]) {
                return false;
            }
            [2 * v + 1, 2 * v + 2]
                .into_iter()
                .filter(|&c| c < count && self.full[c])
                .all(|c| node[b - 1] <= self.nodes[c * b])
        })
    }
}

/// K-way merges `lists` (at most `K`) into `out` through one heap.
pub fn merge_into(lists: &[&[Key]], out: &mut [Key], cfg: &MachineConfig, metrics: &mut Metrics) -> Result<()> {
    let total: usize = lists.iter().map(|l| l.len()).sum();
    assert_eq!(out.len(), total, "output length must equal total input length");
    if total == 0 {
        return Ok(());
    }
    let mut heap = MinBlockHeap::build(lists, cfg, metrics)?;
    let mut at = 0;
    while let Some(block) = heap.pop_block(metrics) {
        out[at..at + block.len()].copy_from_slice(&block);
        at += block.len();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(w: usize, k: usize) -> MachineConfig {
        MachineConfig { branch_factor: k, ..MachineConfig::with_width(w) }
    }

    fn reference_merge(lists: &[Vec<Key>]) -> Vec<Key> {
        let mut all = lists.concat();
        all.sort();
        all
    }

    #[test]
    fn merge_split_disjoint_and_interleaved() {
        let mut m = Metrics::default();
        let (lo, hi) = merge_split(&Block::new(&[1, 2, 3, 4], 4), &Block::new(&[5, 6, 7, 8], 4), &mut m);
        assert_eq!((lo.keys(), hi.keys()), (&[1, 2, 3, 4][..], &[5, 6, 7, 8][..]));
        let (lo, hi) = merge_split(&Block::new(&[1, 3, 5, 7], 4), &Block::new(&[2, 4, 6, 8], 4), &mut m);
        assert_eq!((lo.keys(), hi.keys()), (&[1, 2, 3, 4][..], &[5, 6, 7, 8][..]));
        // 4 * log2(8) per call
        assert_eq!(m.compare_exchanges, 24);
        assert_eq!(m.shared_accesses, 0);
    }

    #[test]
    fn merge_split_charges_bitonic_stage_count() {
        let a: Vec<Key> = (0..32).map(|x| 2 * x).collect();
        let b: Vec<Key> = (0..32).map(|x| 2 * x + 1).collect();
        let mut m = Metrics::default();
        merge_split(&Block::new(&a, 32), &Block::new(&b, 32), &mut m);
        assert_eq!(m.compare_exchanges, 32 * 6);
        assert_eq!(m.conflict_passes, 0);
    }

    #[test]
    fn fill_rule_keeps_high_in_child_with_larger_last() {
        // Build a K=2 heap by hand: root empty, children given.
        let c = cfg(4, 2);
        let mut m = Metrics::default();
        let left: Vec<Key> = vec![5, 6, 7, 8, 20, 21];
        let right: Vec<Key> = vec![1, 2, 3, 4, 30];
        let lists: [&[Key]; 2] = [&left, &right];
        let mut heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        // Root got the smallest block; the right leaf (last 4 < 8) was emptied
        // and refilled with its tail.
        assert_eq!(heap.node(0).unwrap(), &[1, 2, 3, 4]);
        assert_eq!(heap.node(1).unwrap(), &[5, 6, 7, 8]);
        assert_eq!(heap.node(2).unwrap(), &[30, SENTINEL, SENTINEL, SENTINEL]);
        assert!(heap.check_heap_property());
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn fill_rule_interleaved_children() {
        let c = cfg(4, 2);
        let mut m = Metrics::default();
        let left: Vec<Key> = vec![1, 3, 5, 7];
        let right: Vec<Key> = vec![2, 4, 6, 8];
        let lists: [&[Key]; 2] = [&left, &right];
        let heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert_eq!(heap.node(0).unwrap(), &[1, 2, 3, 4]);
        // last(right) = 8 > 7, so the right child keeps the high half and the
        // left one was emptied and refilled from a drained list.
        assert_eq!(heap.node(2).unwrap(), &[5, 6, 7, 8]);
        assert_eq!(heap.node(1).unwrap(), &[SENTINEL; 4]);
    }

    #[test]
    fn tie_on_last_keeps_high_on_left() {
        let c = cfg(2, 2);
        let mut m = Metrics::default();
        let left: Vec<Key> = vec![1, 9];
        let right: Vec<Key> = vec![2, 9];
        let lists: [&[Key]; 2] = [&left, &right];
        let heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert_eq!(heap.node(0).unwrap(), &[1, 2]);
        assert_eq!(heap.node(1).unwrap(), &[9, 9]);
    }

    #[test]
    fn short_leaf_is_sentinel_padded_with_one_read() {
        let c = cfg(4, 2);
        let mut m = Metrics::default();
        let only: Vec<Key> = vec![10, 11, 12];
        let lists: [&[Key]; 1] = [&only];
        let mut heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert_eq!(m.global_block_reads, 1);
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![10, 11, 12]);
        assert_eq!(heap.pop_block(&mut m), None);
        assert_eq!(m.global_block_writes, 1);
    }

    #[test]
    fn build_small_and_pop_in_order() {
        let c = cfg(2, 2);
        let mut m = Metrics::default();
        let a: Vec<Key> = vec![1, 2];
        let b: Vec<Key> = vec![3, 4];
        let lists: [&[Key]; 2] = [&a, &b];
        let mut heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert!(heap.check_heap_property());
        assert_eq!(heap.node(0).unwrap(), &[1, 2]);
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![1, 2]);
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![3, 4]);
        assert_eq!(heap.pop_block(&mut m), None);

        let a: Vec<Key> = vec![1, 3];
        let b: Vec<Key> = vec![2, 4];
        let lists: [&[Key]; 2] = [&a, &b];
        let mut heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![1, 2]);
        assert_eq!(heap.pop_block(&mut m).unwrap(), vec![3, 4]);
    }

    #[test]
    fn single_list_passes_through() {
        let c = cfg(4, 4);
        let mut m = Metrics::default();
        let a: Vec<Key> = vec![4, 5, 6, 7];
        let lists: [&[Key]; 1] = [&a];
        let mut heap = MinBlockHeap::build(&lists, &c, &mut m).unwrap();
        assert_eq!(heap.pop_block(&mut m).unwrap(), a);
    }

    #[test]
    fn unused_leaves_never_surface() {
        let c = cfg(4, 4);
        let a: Vec<Key> = (0..10).map(|x| x * 2).collect();
        let b: Vec<Key> = (0..7).map(|x| x * 2 + 1).collect();
        let lists: [&[Key]; 2] = [&a, &b];
        let mut out = vec![0; 17];
        let mut m = Metrics::default();
        merge_into(&lists, &mut out, &c, &mut m).unwrap();
        assert_eq!(out, reference_merge(&[a, b]));
    }

    #[test]
    fn too_many_lists_rejected() {
        let c = cfg(4, 2);
        let a: Vec<Key> = vec![1];
        let lists: [&[Key]; 3] = [&a, &a, &a];
        let mut m = Metrics::default();
        assert!(matches!(
            MinBlockHeap::build(&lists, &c, &mut m),
            Err(Error::TooManyLists { max: 2, got: 3 })
        ));
    }

    #[test]
    fn each_pop_runs_one_merge_per_level() {
        let c = cfg(4, 4);
        let lists: Vec<Vec<Key>> = (0..4).map(|i| (0..64).map(|x| x * 4 + i).collect()).collect();
        let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
        let mut m = Metrics::default();
        let mut heap = MinBlockHeap::build(&refs, &c, &mut m).unwrap();
        let per_merge = 4 * 3; // B * log2(2B)
        let before = m.compare_exchanges;
        heap.pop_block(&mut m).unwrap();
        assert_eq!(m.compare_exchanges - before, 2 * per_merge);
    }

    proptest! {
        #[test]
        fn pops_equal_reference_merge(
            k in 2usize..=8,
            lens in prop::collection::vec(0usize..200, 1..=8),
            seed in any::<u64>(),
        ) {
            let c = cfg(8, k);
            let lens = &lens[..lens.len().min(k)];
            let mut state = seed;
            let lists: Vec<Vec<Key>> = lens.iter().map(|&n| {
                let mut l: Vec<Key> = (0..n).map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (state >> 40) % 1000
                }).collect();
                l.sort();
                l
            }).collect();
            let refs: Vec<&[Key]> = lists.iter().map(Vec::as_slice).collect();
            let mut m = Metrics::default();
            let total: usize = lens.iter().sum();
            let mut popped = Vec::new();
            if total > 0 {
                let mut heap = MinBlockHeap::build(&refs, &c, &mut m).unwrap();
                prop_assert!(heap.check_heap_property());
                while let Some(block) = heap.pop_block(&mut m) {
                    prop_assert!(heap.check_heap_property());
                    popped.extend(block);
                }
            }
            prop_assert_eq!(popped, reference_merge(&lists));
            let reads: u64 = lens.iter().map(|&n| n.div_ceil(8) as u64).sum();
            prop_assert_eq!(m.global_block_reads, reads);
            prop_assert_eq!(m.global_block_writes, total.div_ceil(8) as u64);
            prop_assert_eq!(m.conflict_passes, 0);
        }
    }
}
