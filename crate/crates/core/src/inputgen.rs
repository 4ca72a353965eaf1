//! Input families: sorted-with-transpositions, fully random, and inputs
//! built to maximize the pairwise baseline's bank conflicts. Also the dataset
//! file format.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basecase::effective_base;
use crate::error::{Error, Result};
use crate::machine::{MachineConfig, Metrics};
use crate::sorters::{trace_tile_merge, warp_diagonals};
use crate::Key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputKind {
    SortedWithInversions,
    Random,
    ConflictHeavy,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InputKind::SortedWithInversions => "inversions",
            InputKind::Random => "random",
            InputKind::ConflictHeavy => "conflict-heavy",
        }
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inversions" | "sorted" => Ok(InputKind::SortedWithInversions),
            "random" => Ok(InputKind::Random),
            "conflict-heavy" => Ok(InputKind::ConflictHeavy),
            other => Err(Error::InvalidInput(format!("unknown input kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputSpec {
    pub n: usize,
    pub kind: InputKind,
    /// Random transpositions applied; used by `SortedWithInversions` only.
    pub inversions: u64,
    pub seed: u64,
}

impl InputSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if self.kind == InputKind::ConflictHeavy && !self.n.is_power_of_two() {
            return Err(Error::InvalidInput(format!("conflict-heavy input needs a power-of-two n, got {}", self.n)));
        }
        Ok(())
    }

    /// Generates the keys; `cfg` shapes conflict-heavy inputs.
    pub fn generate(&self, cfg: &MachineConfig) -> Result<Vec<Key>> {
        self.validate()?;
        match self.kind {
            InputKind::SortedWithInversions => Ok(gen_with_inversions(self.n, self.inversions, self.seed)),
            InputKind::Random => Ok(gen_random(self.n, self.seed)),
            InputKind::ConflictHeavy => gen_conflict_heavy_seeded(self.n.trailing_zeros(), cfg, self.seed),
        }
    }
}

/// Identity permutation of `n` keys with `inversions` random transpositions
/// of distinct positions applied in sequence.
pub fn gen_with_inversions(n: usize, inversions: u64, seed: u64) -> Vec<Key> {
    let mut keys: Vec<Key> = (0..n as Key).collect();
    if n < 2 {
        return keys;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..inversions {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        keys.swap(i, j);
    }
    keys
}

/// Uniformly random permutation of `0..n`.
pub fn gen_random(n: usize, seed: u64) -> Vec<Key> {
    let mut keys: Vec<Key> = (0..n as Key).collect();
    keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    keys
}

/// Number of pairs `i < j` with `keys[i] > keys[j]`.
pub fn count_inversions(keys: &[Key]) -> u64 {
    let mut work = keys.to_vec();
    let mut buf = vec![0; keys.len()];
    sort_count(&mut work, &mut buf)
}

fn sort_count(v: &mut [Key], buf: &mut [Key]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_count(l, bl) + sort_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            j += 1;
            count += (mid - i) as u64;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Merge order of one baseline tile: `true` where the output comes from
/// the first list.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTile {
    pub pattern: Vec<bool>,
    pub conflicts: u64,
    pub random_mean: f64,
}

/// Search effort for [`search_seed_tile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub steps: usize,
    pub random_samples: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self { restarts: 8, steps: 3000, random_samples: 64 }
    }
}

/// Conflict passes of the baseline's shared-memory merge on one full tile
/// whose merged output follows `pattern`. Both windows are filled to
/// capacity; keys beyond the tile are larger than every key inside it, as
/// they are when the tile is followed by more input.
pub fn tile_conflicts(pattern: &[bool], cfg: &MachineConfig) -> u64 {
    let cap = cfg.merge_tile_keys();
    assert_eq!(pattern.len(), cap, "pattern must cover one tile");
    let mut a = Vec::with_capacity(cap);
    let mut b = Vec::with_capacity(cap);
    for (k, &from_a) in pattern.iter().enumerate() {
        if from_a {
            a.push(k as Key);
        } else {
            b.push(k as Key);
        }
    }
    let mut next = cap as Key;
    while a.len() < cap || b.len() < cap {
        if a.len() < cap {
            a.push(next);
            next += 1;
        }
        if b.len() < cap {
            b.push(next);
            next += 1;
        }
    }
    let mut m = Metrics::default();
    let mut out = Vec::with_capacity(cap);
    trace_tile_merge(&a, &b, cap, cfg, &mut m, &mut out);
    m.conflict_passes
}

fn random_balanced(len: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut p: Vec<bool> = (0..len).map(|i| i < len / 2).collect();
    p.shuffle(rng);
    p
}

/// Hill-climbs over balanced tile patterns, swapping one first-list and one
/// second-list position per step and keeping non-worsening moves, with
/// random restarts. Fails unless the best pattern reaches twice the mean of
/// random balanced patterns.
pub fn search_seed_tile(cfg: &MachineConfig, budget: SearchBudget, seed: u64) -> Result<SeedTile> {
    cfg.validate()?;
    let t = cfg.merge_tile_keys();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = budget.random_samples.max(1);
    let random_mean =
        (0..samples).map(|_| tile_conflicts(&random_balanced(t, &mut rng), cfg) as f64).sum::<f64>() / samples as f64;

    let mut best: Option<(Vec<bool>, u64)> = None;
    for _ in 0..budget.restarts.max(1) {
        let mut cur = random_balanced(t, &mut rng);
        let mut score = tile_conflicts(&cur, cfg);
        for _ in 0..budget.steps {
            let i = rng.gen_range(0..t);
            let j = rng.gen_range(0..t);
            if cur[i] == cur[j] {
                continue;
            }
            cur.swap(i, j);
            let s = tile_conflicts(&cur, cfg);
            if s >= score {
                score = s;
            } else {
                cur.swap(i, j);
            }
        }
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((cur, score));
        }
    }
    let (pattern, conflicts) = best.expect("at least one restart");
    if (conflicts as f64) < 2.0 * random_mean {
        return Err(Error::SearchFailed { best: conflicts, random_mean });
    }
    Ok(SeedTile { pattern, conflicts, random_mean })
}

/// Conflict-heavy input of `2^log2_n` keys for the default search seed.
pub fn gen_conflict_heavy(log2_n: u32, cfg: &MachineConfig) -> Result<Vec<Key>> {
    gen_conflict_heavy_seeded(log2_n, cfg, 0)
}

/// Builds an input on which every baseline merge follows the searched tile
/// pattern. Starting from the identity over one base run, each doubling
/// step relabels two copies of the current sequence so that merging them
/// repeats the pattern from the start of every warp's share.
pub fn gen_conflict_heavy_seeded(log2_n: u32, cfg: &MachineConfig, seed: u64) -> Result<Vec<Key>> {
    let n = 1usize
        .checked_shl(log2_n)
        .ok_or_else(|| Error::InvalidInput(format!("2^{log2_n} keys do not fit in memory")))?;
    cfg.validate()?;
    let base = effective_base(n, 2, cfg);
    if n < 2 * base {
        return Err(Error::InvalidInput(format!(
            "conflict-heavy input needs at least two base runs ({} keys), got {n}",
            2 * base
        )));
    }
    let tile = search_seed_tile(cfg, SearchBudget::default(), seed)?;
    let t = tile.pattern.len();

    let mut x: Vec<Key> = (0..base as Key).collect();
    while x.len() < n {
        let m = x.len();
        let total = 2 * m;
        let warps = (cfg.num_warps * total / n).max(1);
        let diagonals = warp_diagonals(total, warps);
        let mut labels = Vec::with_capacity(total);
        for w in diagonals.windows(2) {
            labels.extend((0..w[1] - w[0]).map(|k| tile.pattern[k % t]));
        }
        balance(&mut labels, m);

        let mut a_pos = Vec::with_capacity(m);
        let mut b_pos = Vec::with_capacity(m);
        for (k, &from_a) in labels.iter().enumerate() {
            if from_a {
                a_pos.push(k as Key);
            } else {
                b_pos.push(k as Key);
            }
        }
        let mut next = Vec::with_capacity(total);
        next.extend(x.iter().map(|&k| a_pos[k as usize]));
        next.extend(x.iter().map(|&k| b_pos[k as usize]));
        x = next;
    }
    Ok(x)
}

// Flips labels from the end until exactly `target` are true.
fn balance(labels: &mut [bool], target: usize) {
    let mut ones = labels.iter().filter(|&&b| b).count();
    for l in labels.iter_mut().rev() {
        if ones == target {
            break;
        }
        if ones > target && *l {
            *l = false;
            ones -= 1;
        } else if ones < target && !*l {
            *l = true;
            ones += 1;
        }
    }
}

pub const MAGIC: &[u8; 8] = b"PSLAB001";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Raw,
    Text,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(DatasetFormat::Raw),
            "text" => Ok(DatasetFormat::Text),
            other => Err(Error::Format(format!("unknown dataset format {other:?}"))),
        }
    }
}

pub fn write_dataset(path: &Path, keys: &[Key], format: DatasetFormat) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    match format {
        DatasetFormat::Raw => {
            w.write_all(MAGIC)?;
            w.write_all(&(keys.len() as u64).to_le_bytes())?;
            for k in keys {
                w.write_all(&k.to_le_bytes())?;
            }
        }
        DatasetFormat::Text => {
            for k in keys {
                writeln!(w, "{k}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads either format; binary files are recognized by their magic.
pub fn read_dataset(path: &Path) -> Result<Vec<Key>> {
    parse_dataset(&fs::read(path)?)
}

pub fn parse_dataset(bytes: &[u8]) -> Result<Vec<Key>> {
    if let Some(rest) = bytes.strip_prefix(MAGIC.as_slice()) {
        let (count, body) = rest
            .split_first_chunk::<8>()
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let count = u64::from_le_bytes(*count) as usize;
        if body.len() != count.checked_mul(8).ok_or_else(|| Error::Format("count overflows".into()))? {
            return Err(Error::Format(format!("header says {count} keys, body has {} bytes", body.len())));
        }
        return Ok(body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect());
    }
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| l.parse::<Key>().map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}
