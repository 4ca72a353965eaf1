//! Closed-form counter predictions and measured-versus-predicted reports.

use crate::error::{Error, Result};
use crate::machine::MachineConfig;
use crate::sorters::{Algorithm, SortResult};

/// Tolerance on `|measured / predicted - 1|` for data blocks.
pub const BLOCK_TOLERANCE: f64 = 0.15;

/// Merge rounds needed to reduce `ceil(n / base)` runs to one with
/// `fan_in`-way merges.
pub fn merge_round_count(n: usize, base: usize, fan_in: usize) -> usize {
    assert!(base >= 1 && fan_in >= 2);
    let runs = n.div_ceil(base);
    let mut rounds = 0;
    let mut covered = 1usize;
    while covered < runs {
        covered = covered.saturating_mul(fan_in);
        rounds += 1;
    }
    rounds
}

fn ceil_log2(n: usize) -> u64 {
    u64::from(usize::BITS - n.saturating_sub(1).leading_zeros())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub algorithm: Algorithm,
    pub n: usize,
    pub base: usize,
    pub config: MachineConfig,
    pub rounds: u64,
    /// Data blocks read and written, excluding partition probes.
    pub global_blocks: u64,
    pub probe_io: u64,
    /// Compare-exchange scale; only its growth is meaningful.
    pub work_proxy: u64,
}

/// Counters expected from multiway mergesort: every round and the base case
/// read and write each key block once, and every round runs `P - 1` selections
/// of `K` binary searches.
pub fn predict_multiway(n: usize, cfg: &MachineConfig, base: usize) -> Prediction {
    let k = cfg.branch_factor;
    let rounds = merge_round_count(n, base, k) as u64;
    let blocks = n.div_ceil(cfg.block_size) as u64;
    let log_n = ceil_log2(n);
    let p = cfg.num_warps as u64;
    let w = cfg.warp_width as u64;
    Prediction {
        algorithm: Algorithm::Mms,
        n,
        base,
        config: *cfg,
        rounds,
        global_blocks: 2 * blocks * (rounds + 1),
        probe_io: rounds * k as u64 * (p - 1) * log_n,
        work_proxy: (n as u64).div_ceil(p * w) * log_n * u64::from(w.trailing_zeros()),
    }
}

/// Counters expected from the pairwise baseline, with one Merge Path search
/// per warp boundary per round.
pub fn predict_pairwise(n: usize, cfg: &MachineConfig, base: usize) -> Prediction {
    let rounds = merge_round_count(n, base, 2) as u64;
    let blocks = n.div_ceil(cfg.block_size) as u64;
    let log_n = ceil_log2(n);
    let p = cfg.num_warps as u64;
    Prediction {
        algorithm: Algorithm::Pairwise,
        n,
        base,
        config: *cfg,
        rounds,
        global_blocks: 2 * blocks * (rounds + 1),
        probe_io: rounds * (p - 1) * log_n,
        work_proxy: (n as u64).div_ceil(p) * log_n,
    }
}

/// Prediction matching the algorithm, size and base of a finished sort.
pub fn predict_for(result: &SortResult) -> Prediction {
    match result.algorithm {
        Algorithm::Mms => predict_multiway(result.n, &result.config, result.base),
        Algorithm::Pairwise => predict_pairwise(result.n, &result.config, result.base),
    }
}

/// PEM sorting lower bound `N/(PB) · log_{M/B}(N/B)`.
pub fn pem_lower_bound(n: usize, cfg: &MachineConfig) -> f64 {
    let b = cfg.block_size as f64;
    let blocks = n as f64 / b;
    let fan = (cfg.internal_memory as f64 / b).max(2.0);
    blocks / cfg.num_warps as f64 * blocks.max(1.0).log(fan)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub quantity: &'static str,
    pub measured: f64,
    pub predicted: f64,
    pub ratio: f64,
    /// `None` for rows reported without a pass/fail gate.
    pub tolerance: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, quantity: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

fn ratio(measured: f64, predicted: f64) -> f64 {
    if predicted == 0.0 {
        if measured == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        measured / predicted
    }
}

fn gated(quantity: &'static str, measured: f64, predicted: f64, tolerance: f64) -> ReportRow {
    let r = ratio(measured, predicted);
    ReportRow { quantity, measured, predicted, ratio: r, tolerance: Some(tolerance), pass: (r - 1.0).abs() <= tolerance }
}

fn info(quantity: &'static str, measured: f64, predicted: f64) -> ReportRow {
    ReportRow { quantity, measured, predicted, ratio: ratio(measured, predicted), tolerance: None, pass: true }
}

/// Compares a sort's counters with a prediction for the same run. Rounds
/// must match exactly and data blocks within [`BLOCK_TOLERANCE`]; probes and
/// the PEM lower bound are informational.
pub fn compare_report(measured: &SortResult, predicted: &Prediction) -> Result<Report> {
    if measured.n != predicted.n
        || measured.base != predicted.base
        || measured.config != predicted.config
        || measured.algorithm != predicted.algorithm
    {
        return Err(Error::ConfigMismatch(format!(
            "measured {} n={} base={}, predicted {} n={} base={}",
            measured.algorithm, measured.n, measured.base, predicted.algorithm, predicted.n, predicted.base
        )));
    }
    let m = &measured.metrics;
    Ok(Report {
        rows: vec![
            gated("rounds", m.merge_rounds as f64, predicted.rounds as f64, 0.0),
            gated("global_blocks", m.data_blocks() as f64, predicted.global_blocks as f64, BLOCK_TOLERANCE),
            info("partition_probes", m.partition_probes as f64, predicted.probe_io as f64),
            info("pem_lower_bound", m.global_blocks() as f64, pem_lower_bound(measured.n, &measured.config)),
        ],
    })
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let rank = (start + end - 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with tied values given their average rank.
/// Returns `NaN` when either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "samples must pair up");
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
