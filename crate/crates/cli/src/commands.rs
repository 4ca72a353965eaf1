//! Subcommand definitions and their implementations. Each command returns
//! `Ok(false)` when a verification fails so the binary can exit nonzero.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use pslab::inputgen::{read_dataset, write_dataset, DatasetFormat};
use pslab::{Algorithm, InputKind, InputSpec, MachineConfig};

use crate::config::MachineArgs;
use crate::record::{read_records, write_records, RunRecord};
use crate::svg::{line_chart, Series};

#[derive(Debug, Parser)]
#[command(name = "pslab", version, about = "Instrumented multiway vs pairwise mergesort lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a dataset file.
    Generate(GenerateArgs),
    /// Sort a dataset file with one algorithm and emit its run record.
    Sort(SortArgs),
    /// Run both algorithms on the same generated input.
    Bench(BenchArgs),
    /// Run a grid of sorts along one parameter axis.
    Sweep(SweepArgs),
    /// Summarize a CSV of run records.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Inversions,
    Random,
    ConflictHeavy,
}

impl From<KindArg> for InputKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Inversions => InputKind::SortedWithInversions,
            KindArg::Random => InputKind::Random,
            KindArg::ConflictHeavy => InputKind::ConflictHeavy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    Mms,
    Pairwise,
    Both,
}

impl AlgorithmArg {
    fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgorithmArg::Mms => vec![Algorithm::Mms],
            AlgorithmArg::Pairwise => vec![Algorithm::Pairwise],
            AlgorithmArg::Both => Algorithm::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Raw,
    Text,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Raw => DatasetFormat::Raw,
            FormatArg::Text => DatasetFormat::Text,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(short = 'n', long, default_value_t = 1 << 16)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = KindArg::Inversions)]
    pub kind: KindArg,
    /// Random transpositions applied to sorted input.
    #[arg(long, default_value_t = 0)]
    pub inversions: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl InputArgs {
    fn spec(&self) -> InputSpec {
        InputSpec { n: self.n, kind: self.kind.into(), inversions: self.inversions, seed: self.seed }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Raw)]
    pub format: FormatArg,
    #[command(flatten)]
    pub machine: MachineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SortArgs {
    #[arg(short, long, value_enum)]
    pub algorithm: AlgorithmArg,
    #[arg(short, long)]
    pub input: PathBuf,
    /// Write the sorted keys here.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Raw)]
    pub format: FormatArg,
    /// Append run records to this CSV instead of printing them.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub machine: MachineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub machine: MachineArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    K,
    P,
    N,
    Inversions,
}

impl Axis {
    fn column(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::P => "p",
            Axis::N => "n",
            Axis::Inversions => "inversions",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<u64>,
    /// Seeds per grid point, counting up from `--seed`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Both)]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Column plotted in the chart.
    #[arg(long, default_value = "conflict_passes")]
    pub metric: String,
    #[command(flatten)]
    pub machine: MachineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    pub csv: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long, default_value = "n")]
    pub x: String,
    #[arg(long, default_value = "conflict_passes")]
    pub metric: String,
}

pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Sort(a) => sort(&a),
        Command::Bench(a) => bench(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Report(a) => report(&a),
    }
}

pub fn generate(args: &GenerateArgs) -> Result<bool> {
    let cfg = args.machine.resolve()?;
    let keys = args.input.spec().generate(&cfg)?;
    write_dataset(&args.out, &keys, args.format.into())
        .with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} keys to {}", keys.len(), args.out.display());
    Ok(true)
}

fn emit(records: &[RunRecord], csv: Option<&Path>) -> Result<()> {
    match csv {
        Some(path) => append_records(path, records),
        None => {
            write_records(io::stdout().lock(), records)?;
            Ok(())
        }
    }
}

/// Appends to `path`, writing a header only when the file is new or empty.
pub fn append_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn report_failures(records: &[RunRecord]) -> bool {
    let mut ok = true;
    for r in records.iter().filter(|r| !r.passed()) {
        ok = false;
        eprintln!(
            "FAILED {} n={} k={} seed={}: sorted_ok={} conflict_ok={} rounds_ok={}",
            r.algorithm, r.n, r.k, r.seed, r.sorted_ok, r.conflict_ok, r.rounds_ok
        );
    }
    ok
}

pub fn sort(args: &SortArgs) -> Result<bool> {
    let cfg = args.machine.resolve()?;
    let keys = read_dataset(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let spec = InputSpec { n: keys.len(), kind: InputKind::Random, inversions: 0, seed: 0 };
    let mut records = Vec::new();
    for alg in args.algorithm.algorithms() {
        let result = alg.sort(&keys, &cfg)?;
        let mut record = RunRecord::new(&result, &spec, &keys);
        record.kind = "file".into();
        if let Some(out) = &args.output {
            write_dataset(out, &result.keys, args.format.into())?;
        }
        records.push(record);
    }
    emit(&records, args.csv.as_deref())?;
    Ok(report_failures(&records))
}

pub fn bench(args: &BenchArgs) -> Result<bool> {
    let cfg = args.machine.resolve()?;
    let spec = args.input.spec();
    let keys = spec.generate(&cfg)?;
    let records: Vec<RunRecord> = Algorithm::ALL
        .par_iter()
        .map(|alg| Ok(RunRecord::new(&alg.sort(&keys, &cfg)?, &spec, &keys)))
        .collect::<Result<_>>()?;
    for r in &records {
        eprintln!(
            "{:>9}: rounds {:>3}  global blocks {:>10}  conflicts {:>10}",
            r.algorithm,
            r.merge_rounds,
            r.global_block_reads + r.global_block_writes,
            r.conflict_passes
        );
    }
    emit(&records, args.csv.as_deref())?;
    Ok(report_failures(&records))
}

/// One sweep grid point.
#[derive(Debug, Clone, Copy)]
pub struct GridPoint {
    pub algorithm: Algorithm,
    pub spec: InputSpec,
    pub config: MachineConfig,
}

/// Grid points in output order: axis value, then seed, then algorithm.
pub fn sweep_grid(args: &SweepArgs) -> Result<Vec<GridPoint>> {
    if args.values.is_empty() {
        bail!("sweep needs at least one axis value");
    }
    if args.seeds == 0 {
        bail!("sweep needs at least one seed");
    }
    let base_cfg = args.machine.resolve()?;
    let mut points = Vec::new();
    for &value in &args.values {
        let mut cfg = base_cfg;
        let mut spec = args.input.spec();
        let v = usize::try_from(value).context("axis value out of range")?;
        match args.axis {
            Axis::K => cfg.branch_factor = v,
            Axis::P => cfg.num_warps = v,
            Axis::N => spec.n = v,
            Axis::Inversions => {
                spec.kind = InputKind::SortedWithInversions;
                spec.inversions = value;
            }
        }
        cfg.validate()?;
        spec.validate()?;
        for seed in args.input.seed..args.input.seed + args.seeds {
            for algorithm in args.algorithm.algorithms() {
                points.push(GridPoint { algorithm, spec: InputSpec { seed, ..spec }, config: cfg });
            }
        }
    }
    Ok(points)
}

/// Executes a sweep; rows come back in grid order whatever the scheduling.
pub fn run_sweep(args: &SweepArgs) -> Result<Vec<RunRecord>> {
    sweep_grid(args)?
        .par_iter()
        .map(|p| {
            let keys = p.spec.generate(&p.config)?;
            let result = p.algorithm.sort(&keys, &p.config)?;
            Ok(RunRecord::new(&result, &p.spec, &keys))
        })
        .collect()
}

fn chart(records: &[RunRecord], x: &str, metric: &str, title: &str) -> Result<String> {
    let mut grouped: BTreeMap<&str, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let xv = r.metric(x).with_context(|| format!("unknown column {x:?}"))?;
        let yv = r.metric(metric).with_context(|| format!("unknown column {metric:?}"))?;
        let slot = grouped.entry(&r.algorithm).or_default().entry(xv.to_bits()).or_insert((0.0, 0));
        slot.0 += yv;
        slot.1 += 1;
    }
    let series: Vec<Series> = grouped
        .into_iter()
        .map(|(name, pts)| {
            let mut points: Vec<(f64, f64)> =
                pts.into_iter().map(|(xb, (sum, count))| (f64::from_bits(xb), sum / count as f64)).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { name: name.to_string(), points }
        })
        .collect();
    Ok(line_chart(title, x, metric, &series))
}

pub fn sweep(args: &SweepArgs) -> Result<bool> {
    let records = run_sweep(args)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_records(file, &records)?;
        }
        None => write_records(io::stdout().lock(), &records)?,
    }
    if let Some(svg) = &args.svg {
        let title = format!("{} vs {}", args.metric, args.axis.column());
        fs::write(svg, chart(&records, args.axis.column(), &args.metric, &title)?)?;
    }
    Ok(report_failures(&records))
}

pub fn report(args: &ReportArgs) -> Result<bool> {
    let file = fs::File::open(&args.csv).with_context(|| format!("opening {}", args.csv.display()))?;
    let records = read_records(file)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{} runs", records.len())?;
    let mut by_alg: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in &records {
        by_alg.entry(&r.algorithm).or_default().push(r);
    }
    for (alg, rows) in &by_alg {
        let failed = rows.iter().filter(|r| !r.passed()).count();
        let conflicts: u64 = rows.iter().map(|r| r.conflict_passes).sum();
        let blocks: u64 = rows.iter().map(|r| r.global_block_reads + r.global_block_writes).sum();
        let worst = rows.iter().map(|r| (r.blocks_ratio - 1.0).abs()).fold(0.0, f64::max);
        writeln!(
            out,
            "{alg}: {} runs, {failed} failed, conflict passes {conflicts}, global blocks {blocks}, worst |blocks ratio - 1| {worst:.4}",
            rows.len()
        )?;
    }
    if let Some(svg) = &args.svg {
        let title = format!("{} vs {}", args.metric, args.x);
        fs::write(svg, chart(&records, &args.x, &args.metric, &title)?)?;
    }
    Ok(report_failures(&records))
}
