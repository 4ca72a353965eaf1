//! One CSV row per sort execution.

use std::io;

use serde::{Deserialize, Serialize};

use pslab::analytics::{compare_report, predict_for};
use pslab::{Algorithm, InputSpec, SortResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub algorithm: String,
    pub kind: String,
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub l: usize,
    pub base: usize,
    pub seed: u64,
    pub inversions: u64,
    pub global_block_reads: u64,
    pub global_block_writes: u64,
    pub shared_accesses: u64,
    pub conflict_passes: u64,
    pub compare_exchanges: u64,
    pub merge_rounds: u64,
    pub partition_probes: u64,
    pub predicted_rounds: u64,
    pub predicted_blocks: u64,
    pub blocks_ratio: f64,
    pub sorted_ok: bool,
    pub conflict_ok: bool,
    pub rounds_ok: bool,
}

/// Rounds `x` to six significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

impl RunRecord {
    /// Builds the row for `result`, verifying sortedness against `input`.
    pub fn new(result: &SortResult, spec: &InputSpec, input: &[u64]) -> Self {
        let mut expect = input.to_vec();
        expect.sort_unstable();
        let sorted_ok = expect == result.keys;
        let prediction = predict_for(result);
        let report = compare_report(result, &prediction).expect("prediction built from the same result");
        let blocks = report.row("global_blocks").expect("report has a blocks row");
        let m = &result.metrics;
        let cfg = &result.config;
        RunRecord {
            schema_version: SCHEMA_VERSION,
            algorithm: result.algorithm.to_string(),
            kind: spec.kind.to_string(),
            n: result.n,
            k: result.algorithm.fan_in(cfg),
            p: cfg.num_warps,
            l: cfg.thread_merge_len,
            base: result.base,
            seed: spec.seed,
            inversions: spec.inversions,
            global_block_reads: m.global_block_reads,
            global_block_writes: m.global_block_writes,
            shared_accesses: m.shared_accesses,
            conflict_passes: m.conflict_passes,
            compare_exchanges: m.compare_exchanges,
            merge_rounds: m.merge_rounds,
            partition_probes: m.partition_probes,
            predicted_rounds: prediction.rounds,
            predicted_blocks: prediction.global_blocks,
            blocks_ratio: round_sig(blocks.ratio),
            sorted_ok,
            conflict_ok: result.algorithm != Algorithm::Mms || m.conflict_passes == 0,
            rounds_ok: report.row("rounds").is_some_and(|r| r.pass),
        }
    }

    pub fn passed(&self) -> bool {
        self.sorted_ok && self.conflict_ok && self.rounds_ok
    }

    /// Numeric value of a column, for charts.
    pub fn metric(&self, column: &str) -> Option<f64> {
        let v = match column {
            "n" => self.n as f64,
            "k" => self.k as f64,
            "p" => self.p as f64,
            "l" => self.l as f64,
            "base" => self.base as f64,
            "seed" => self.seed as f64,
            "inversions" => self.inversions as f64,
            "global_block_reads" => self.global_block_reads as f64,
            "global_block_writes" => self.global_block_writes as f64,
            "global_blocks" => (self.global_block_reads + self.global_block_writes) as f64,
            "shared_accesses" => self.shared_accesses as f64,
            "conflict_passes" => self.conflict_passes as f64,
            "compare_exchanges" => self.compare_exchanges as f64,
            "merge_rounds" => self.merge_rounds as f64,
            "partition_probes" => self.partition_probes as f64,
            "predicted_rounds" => self.predicted_rounds as f64,
            "predicted_blocks" => self.predicted_blocks as f64,
            "blocks_ratio" => self.blocks_ratio,
            _ => return None,
        };
        Some(v)
    }
}

pub fn write_records<W: io::Write>(out: W, records: &[RunRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: io::Read>(input: R) -> csv::Result<Vec<RunRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
