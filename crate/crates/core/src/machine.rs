//! The abstract machine: parameters, event counters and bank arithmetic.
//!
//! Global memory is blocked: a warp moves `B` consecutive keys per
//! transaction. Shared memory has `num_banks` word-interleaved banks; a
//! warp-wide instruction is serialized into as many passes as the busiest
//! bank has distinct words.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};

/// Parameter bundle for one simulated device.
///
/// The problem size is not stored here; it travels with each invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineConfig {
    /// Lanes per warp (`W`).
    pub warp_width: usize,
    /// Keys per global transaction (`B`), equal to `W`.
    pub block_size: usize,
    /// Number of warps (`P`).
    pub num_warps: usize,
    /// Shared-memory words available to one warp (`M`).
    pub internal_memory: usize,
    /// Lists merged per multiway round (`K`).
    pub branch_factor: usize,
    /// Shared-memory banks, equal to `W`.
    pub num_banks: usize,
    /// Items each thread merges per tile in the pairwise baseline (`L`).
    pub thread_merge_len: usize,
    /// Requested base-case run length.
    pub base_size: usize,
    /// Largest run length the base case may grow to by bitonic doubling.
    pub base_limit: usize,
}

impl Default for MachineConfig {
    fn default() -> Self {
        Self {
            warp_width: 32,
            block_size: 32,
            num_warps: 128,
            internal_memory: 4096,
            branch_factor: 4,
            num_banks: 32,
            thread_merge_len: 11,
            base_size: 1024,
            base_limit: 4096,
        }
    }
}

/// Named device profiles: K and L tuned per shared-memory generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 48 KiB shared memory per SM.
    Kepler,
    /// 96 KiB shared memory per SM.
    Maxwell,
}

impl Profile {
    pub fn config(self) -> MachineConfig {
        let base = MachineConfig::default();
        match self {
            Profile::Kepler => MachineConfig { branch_factor: 4, thread_merge_len: 11, ..base },
            Profile::Maxwell => MachineConfig {
                branch_factor: 8,
                thread_merge_len: 15,
                internal_memory: 8192,
                ..base
            },
        }
    }
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl MachineConfig {
    /// A config with warp width, block size and bank count all set to `w`.
    pub fn with_width(w: usize) -> Self {
        Self {
            warp_width: w,
            block_size: w,
            num_banks: w,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let w = self.warp_width;
        if w == 0 || !w.is_power_of_two() {
            return bad(format!("warp width {w} must be a positive power of two"));
        }
        if self.block_size != w {
            return bad(format!("block size {} must equal warp width {w}", self.block_size));
        }
        if self.num_banks != w {
            return bad(format!("bank count {} must equal warp width {w}", self.num_banks));
        }
        if self.num_warps == 0 {
            return bad("at least one warp is required".into());
        }
        if self.branch_factor < 2 {
            return bad(format!("branch factor {} must be at least 2", self.branch_factor));
        }
        let heap_words = self.block_size * (2 * self.branch_factor - 1);
        if heap_words > self.internal_memory {
            return bad(format!(
                "heap needs {heap_words} words but internal memory is {}",
                self.internal_memory
            ));
        }
        if self.thread_merge_len == 0 || gcd(self.thread_merge_len, self.num_banks) != 1 {
            return bad(format!(
                "thread merge length {} must be positive and co-prime with {} banks",
                self.thread_merge_len, self.num_banks
            ));
        }
        if self.base_size == 0 || !self.base_size.is_power_of_two() {
            return bad(format!("base size {} must be a positive power of two", self.base_size));
        }
        if self.base_limit < self.base_size {
            return bad(format!(
                "base limit {} is below base size {}",
                self.base_limit, self.base_size
            ));
        }
        Ok(())
    }

    /// Keys in one shearsort tile (`W²`).
    pub fn tile_keys(&self) -> usize {
        self.warp_width * self.warp_width
    }

    /// Output keys per pairwise-baseline tile (`W·L`).
    pub fn merge_tile_keys(&self) -> usize {
        self.warp_width * self.thread_merge_len
    }
}

/// Deterministic event counters. Addition merges sub-phase counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Metrics {
    pub global_block_reads: u64,
    pub global_block_writes: u64,
    /// Warp-wide shared-memory instructions.
    pub shared_accesses: u64,
    /// Serialized passes beyond the first, summed over instructions.
    pub conflict_passes: u64,
    pub compare_exchanges: u64,
    pub merge_rounds: u64,
    /// Binary-search probes into global memory during partitioning. Each
    /// probe is also counted in `global_block_reads`.
    pub partition_probes: u64,
}

impl Metrics {
    pub fn global_blocks(&self) -> u64 {
        self.global_block_reads + self.global_block_writes
    }

    /// Global blocks moved as data, excluding partition probes.
    pub fn data_blocks(&self) -> u64 {
        self.global_blocks() - self.partition_probes
    }

    pub fn charge_global(&mut self, num_keys: usize, direction: Direction, cfg: &MachineConfig) {
        let blocks = num_keys.div_ceil(cfg.block_size) as u64;
        match direction {
            Direction::Read => self.global_block_reads += blocks,
            Direction::Write => self.global_block_writes += blocks,
        }
    }

    /// One global probe: a single uncoalesced read.
    pub fn charge_probe(&mut self) {
        self.partition_probes += 1;
        self.global_block_reads += 1;
    }

    /// Charges one warp-wide shared instruction with the given lane addresses.
    /// An instruction with no active lane costs nothing.
    pub fn charge_shared(&mut self, lanes: &[Option<u64>], cfg: &MachineConfig) {
        let degree = lane_degree(lanes, cfg.num_banks);
        if degree > 0 {
            self.shared_accesses += 1;
            self.conflict_passes += degree - 1;
        }
    }
}

impl Add for Metrics {
    type Output = Metrics;

    fn add(mut self, rhs: Metrics) -> Metrics {
        self += rhs;
        self
    }
}

impl AddAssign for Metrics {
    fn add_assign(&mut self, rhs: Metrics) {
        self.global_block_reads += rhs.global_block_reads;
        self.global_block_writes += rhs.global_block_writes;
        self.shared_accesses += rhs.shared_accesses;
        self.conflict_passes += rhs.conflict_passes;
        self.compare_exchanges += rhs.compare_exchanges;
        self.merge_rounds += rhs.merge_rounds;
        self.partition_probes += rhs.partition_probes;
    }
}

impl Sum for Metrics {
    fn sum<I: Iterator<Item = Metrics>>(iter: I) -> Metrics {
        iter.fold(Metrics::default(), Add::add)
    }
}

impl<'a> Sum<&'a Metrics> for Metrics {
    fn sum<I: Iterator<Item = &'a Metrics>>(iter: I) -> Metrics {
        iter.copied().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Read,
    Write,
}

/// Shared-memory word addresses issued by one warp instruction; `None` marks
/// an inactive lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpAccess {
    lanes: Vec<Option<u64>>,
}

impl WarpAccess {
    pub fn new(lanes: Vec<Option<u64>>, cfg: &MachineConfig) -> Result<Self> {
        if lanes.len() != cfg.warp_width {
            return Err(Error::InvalidConfig(format!(
                "warp access has {} lanes, warp width is {}",
                lanes.len(),
                cfg.warp_width
            )));
        }
        Ok(Self { lanes })
    }

    /// All lanes active with the given addresses.
    pub fn dense(addresses: impl IntoIterator<Item = u64>, cfg: &MachineConfig) -> Result<Self> {
        Self::new(addresses.into_iter().map(Some).collect(), cfg)
    }

    pub fn lanes(&self) -> &[Option<u64>] {
        &self.lanes
    }
}

/// Serialized passes needed by `access`: the largest number of distinct words
/// requested from any single bank. Lanes reading the same word share a pass.
/// Returns 0 when no lane is active.
pub fn conflict_degree(access: &WarpAccess, cfg: &MachineConfig) -> u64 {
    lane_degree(&access.lanes, cfg.num_banks)
}

pub(crate) fn lane_degree(lanes: &[Option<u64>], num_banks: usize) -> u64 {
    let banks = num_banks as u64;
    let mut active = 0usize;
    let mut distinct = true;
    if num_banks <= 128 {
        let mut seen = 0u128;
        for addr in lanes.iter().flatten() {
            active += 1;
            let bit = 1u128 << (addr % banks);
            if seen & bit != 0 {
                distinct = false;
                break;
            }
            seen |= bit;
        }
        if distinct {
            return u64::from(active > 0);
        }
    }

    let mut stack = [(0u64, 0u64); 64];
    let mut heap = Vec::new();
    let pairs: &mut [(u64, u64)] = if lanes.len() <= stack.len() {
        let mut len = 0;
        for &a in lanes.iter().flatten() {
            stack[len] = (a % banks, a);
            len += 1;
        }
        &mut stack[..len]
    } else {
        heap.extend(lanes.iter().flatten().map(|&a| (a % banks, a)));
        &mut heap
    };
    if pairs.is_empty() {
        return 0;
    }
    pairs.sort_unstable();
    let mut best = 0u64;
    let mut run = 0u64;
    let mut current = u64::MAX;
    let mut previous = None;
    for &(bank, word) in pairs.iter() {
        if previous == Some(word) {
            continue;
        }
        previous = Some(word);
        if bank == current {
            run += 1;
        } else {
            current = bank;
            run = 1;
        }
        best = best.max(run);
    }
    best
}
