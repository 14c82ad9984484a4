//! Command-line experiment runner.

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::Parser;
use rayon::prelude::*;

use syncsim_core::config::{default_config, Backend, Benchmark, SimConfig};
use syncsim_core::experiment::{self, cell_label, CellError, CellOutcome};
use syncsim_core::stats::cell_means;
use syncsim_core::{EnergyEventKind, RunResult, System};

use crate::config_file::load_config_file;
use crate::orderings::check_orderings;
use crate::output::{self, OutputError};
use crate::trace::TraceWriter;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    /// Deadlock, cycle limit, oracle failure or output error.
    Failure = 1,
    /// Bad flags or configuration.
    Usage = 2,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Inclusive seed range written `A..B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

impl FromStr for SeedRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..=")
            .or_else(|| s.split_once(".."))
            .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
        let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("`{x}`: {e}"));
        let (first, last) = (parse(a)?, parse(b)?);
        if first > last {
            return Err(format!("empty seed range {first}..{last}"));
        }
        Ok(Self { first, last })
    }
}

impl fmt::Display for SeedRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse()
        .map_err(|()| "expected lock, transaction or semaphore".into())
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    s.parse()
        .map_err(|()| "expected rbtree, fft or micro".into())
}

/// Runs synchronization experiments on the simulated multiprocessor.
#[derive(Debug, Parser)]
#[command(name = "syncsim", version)]
pub struct CliArgs {
    /// Configuration file (`key = value` per line).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_backend, value_name = "lock|transaction|semaphore")]
    pub backend: Option<Backend>,
    #[arg(long, value_parser = parse_benchmark, value_name = "rbtree|fft|micro")]
    pub benchmark: Option<Benchmark>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Inclusive seed range; the matrix defaults to 1..10.
    #[arg(long, value_name = "A..B")]
    pub seeds: Option<SeedRange>,
    /// Output directory for results.csv and the plot data.
    #[arg(long, value_name = "DIR", default_value = "results")]
    pub out: PathBuf,
    /// Run every backend on every benchmark.
    #[arg(long, conflicts_with_all = ["backend", "benchmark", "seed", "trace", "dump_program"])]
    pub matrix: bool,
    /// Write a JSON-lines trace of every cycle.
    #[arg(long, value_name = "PATH", conflicts_with = "seeds")]
    pub trace: Option<PathBuf>,
    /// Write a listing of the generated thread programs.
    #[arg(long, value_name = "PATH", conflicts_with = "seeds")]
    pub dump_program: Option<PathBuf>,
}

pub const DEFAULT_MATRIX_SEEDS: SeedRange = SeedRange { first: 1, last: 10 };

/// Parses, runs and reports. `out` receives the summary, `err` diagnostics.
pub fn main_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match CliArgs::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let rendered = e.render().to_string();
            if help {
                let _ = write!(out, "{rendered}");
                return Exit::Success;
            }
            let _ = write!(err, "{rendered}");
            return Exit::Usage;
        }
    };
    let cfg = match base_config(&args) {
        Ok(c) => c,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return Exit::Usage;
        }
    };
    if args.matrix {
        run_matrix(&args, &cfg, out, err)
    } else {
        run_single(&args, &cfg, out, err)
    }
}

/// Configuration from the file (or defaults) with the flag overrides
/// applied and validated.
pub fn base_config(args: &CliArgs) -> Result<SimConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => load_config_file(p).map_err(|e| e.to_string())?,
        None => default_config(),
    };
    if let Some(b) = args.backend {
        cfg.backend = b;
    }
    if let Some(b) = args.benchmark {
        cfg.benchmark = b;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let violations = cfg.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(format!("invalid configuration: {}", list.join("; ")));
    }
    Ok(cfg)
}

/// Why a run did not produce an accepted result.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit(&self) -> Exit {
        match self {
            Failure::Cell(CellError::Init(_)) => Exit::Usage,
            _ => Exit::Failure,
        }
    }
}

fn io_failure(path: &Path, e: impl fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

/// Runs a prepared system to completion, optionally writing a per-cycle
/// trace.
pub fn execute(sys: &mut System, trace: Option<&Path>) -> Result<(), Failure> {
    let res = match trace {
        None => sys.run(),
        Some(path) => {
            let file = File::create(path).map_err(|e| io_failure(path, e))?;
            let mut w = TraceWriter::new(file);
            let res = sys.run_observed(|r| w.record(r));
            w.finish().map_err(|e| io_failure(path, e))?;
            res
        }
    };
    res.map(drop).map_err(|e| Failure::Cell(CellError::Run(e)))
}

fn single_cell(cfg: &SimConfig, args: &CliArgs) -> Result<CellOutcome, Failure> {
    let (mut sys, workload) = experiment::prepare(cfg)?;
    if let Some(path) = &args.dump_program {
        std::fs::write(path, workload.listing()).map_err(|e| io_failure(path, e))?;
    }
    execute(&mut sys, args.trace.as_deref())?;
    Ok(experiment::finish(&sys, &workload, cfg.seed))
}

fn write_results(dir: &Path, results: &[RunResult], plots: bool) -> Result<(), OutputError> {
    output::create_dir(dir)?;
    output::emit_csv(results, &dir.join("results.csv"))?;
    if plots {
        output::emit_plot_data(results, dir)?;
    }
    Ok(())
}

/// One benchmark under one backend for each requested seed.
pub fn run_single(
    args: &CliArgs,
    base: &SimConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Exit {
    let seeds: Vec<u64> = match args.seeds {
        Some(r) => r.seeds().collect(),
        None => vec![base.seed],
    };
    let mut status = Exit::Success;
    let mut results = Vec::new();
    for seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        match single_cell(&cfg, args) {
            Ok(o) => {
                let _ = write!(out, "{}", single_summary(&o));
                if !o.verdict.ok {
                    let _ = writeln!(
                        err,
                        "error: {}: correctness check failed: {}",
                        cell_label(&cfg),
                        o.verdict.detail
                    );
                    status = Exit::Failure;
                }
                results.push(o.result);
            }
            Err(f) => {
                let _ = writeln!(err, "error: {}: {f}", cell_label(&cfg));
                status = f.exit();
            }
        }
    }
    if !results.is_empty() {
        if let Err(e) = write_results(&args.out, &results, false) {
            let _ = writeln!(err, "error: {e}");
            status = Exit::Failure;
        }
    }
    status
}

/// Human-readable summary of one run.
pub fn single_summary(o: &CellOutcome) -> String {
    let r = &o.result;
    let mut s = format!(
        "{} / {} / seed {}: {}\n",
        r.benchmark,
        r.backend,
        r.seed,
        if o.verdict.ok { "ok" } else { "FAILED" }
    );
    s += &format!("  check            {}\n", o.verdict.detail);
    s += &format!("  cycles           {}\n", r.cycles);
    s += &format!(
        "  d1               {} accesses, {} misses, miss rate {:.6}\n",
        r.d1_accesses, r.d1_misses, r.d1_miss_rate
    );
    s += &format!(
        "  tlb              {} accesses, {} misses\n",
        r.tlb_accesses, r.tlb_misses
    );
    s += &format!(
        "  shared accesses  {}, bus busy {} cycles\n",
        r.shared_accesses, r.bus_busy_cycles
    );
    s += &format!(
        "  sync             {} spin probes, {} commits, {} aborts, {} blocks, {} wakes\n",
        r.spin_probes, r.tx_commits, r.tx_aborts, r.sem_blocks, r.sem_wakes
    );
    s += &format!("  energy           {:.6}\n", r.energy_total);
    for k in EnergyEventKind::ALL {
        let e = r.energy_of(k);
        if e > 0.0 {
            s += &format!("    {:<18} {:.6}\n", k.name(), e);
        }
    }
    s
}

/// Every backend on every benchmark over the seed range; cells run in
/// parallel.
pub fn run_matrix(
    args: &CliArgs,
    base: &SimConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Exit {
    let seeds = args.seeds.unwrap_or(DEFAULT_MATRIX_SEEDS);
    let mut cells = Vec::new();
    for bench in Benchmark::ALL {
        for backend in Backend::ALL {
            for seed in seeds.seeds() {
                let mut c = base.clone();
                c.benchmark = bench;
                c.backend = backend;
                c.seed = seed;
                cells.push(c);
            }
        }
    }
    let outcomes: Vec<(SimConfig, Result<CellOutcome, CellError>)> = cells
        .into_par_iter()
        .map(|c| {
            let o = experiment::run_cell(&c);
            (c, o)
        })
        .collect();

    let mut status = Exit::Success;
    let mut results = Vec::new();
    for (cfg, o) in outcomes {
        match o {
            Ok(o) => {
                if !o.verdict.ok {
                    let _ = writeln!(
                        err,
                        "error: {}: correctness check failed: {}",
                        cell_label(&cfg),
                        o.verdict.detail
                    );
                    status = Exit::Failure;
                }
                results.push(o.result);
            }
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", cell_label(&cfg));
                status = Exit::Failure;
            }
        }
    }
    if results.is_empty() {
        return Exit::Failure;
    }
    if let Err(e) = write_results(&args.out, &results, true) {
        let _ = writeln!(err, "error: {e}");
        status = Exit::Failure;
    }
    let _ = write!(out, "{}", matrix_summary(&results, seeds));
    status
}

/// Means per cell and the backend orderings with PASS/FAIL markers.
pub fn matrix_summary(results: &[RunResult], seeds: SeedRange) -> String {
    let means = cell_means(results);
    let mut s = format!("means over seeds {seeds}\n");
    s += &format!(
        "{:<8} {:<12} {:>12} {:>14} {:>10}\n",
        "bench", "backend", "cycles", "energy", "miss rate"
    );
    for ((bench, backend), m) in &means {
        s += &format!(
            "{:<8} {:<12} {:>12.1} {:>14.1} {:>10.4}\n",
            bench.name(),
            backend.name(),
            m.cycles,
            m.energy_total,
            m.d1_miss_rate
        );
    }
    s += "\norderings\n";
    for c in check_orderings(&means) {
        s += &format!(
            "{} {:<8} {:<46} {}\n",
            if c.ok { "PASS" } else { "FAIL" },
            c.benchmark.name(),
            c.claim,
            c.detail
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(v: &[&str]) -> Result<CliArgs, clap::Error> {
        CliArgs::try_parse_from(std::iter::once("syncsim").chain(v.iter().copied()))
    }

    #[test]
    fn single_run_flags() {
        let a = parse(&[
            "--backend",
            "semaphore",
            "--benchmark",
            "fft",
            "--seed",
            "7",
        ])
        .unwrap();
        assert_eq!(a.backend, Some(Backend::Semaphore));
        assert_eq!(a.benchmark, Some(Benchmark::Fft));
        assert_eq!(a.seed, Some(7));
        assert!(!a.matrix);
    }

    #[test]
    fn matrix_flags() {
        let a = parse(&["--matrix", "--seeds", "1..10", "--out", "results/"]).unwrap();
        assert!(a.matrix);
        assert_eq!(a.seeds.unwrap().seeds().count(), 10);
        assert_eq!(a.out, PathBuf::from("results/"));
    }

    #[test]
    fn conflicts_and_unknown_flags_are_usage_errors() {
        for argv in [
            &["--matrix", "--backend", "lock"][..],
            &["--matrix", "--trace", "t.jsonl"],
            &["--seed", "1", "--seeds", "1..2"],
            &["--frobnicate"],
            &["--backend", "mutex"],
            &["--seeds", "5..2"],
        ] {
            assert!(parse(argv).is_err(), "{argv:?}");
            let mut o = Vec::new();
            let mut e = Vec::new();
            let code = main_with(
                std::iter::once("syncsim").chain(argv.iter().copied()),
                &mut o,
                &mut e,
            );
            assert_eq!(code, Exit::Usage, "{argv:?}");
        }
    }

    #[test]
    fn help_exits_success() {
        let mut o = Vec::new();
        let mut e = Vec::new();
        assert_eq!(
            main_with(["syncsim", "--help"], &mut o, &mut e),
            Exit::Success
        );
        assert!(String::from_utf8(o).unwrap().contains("--matrix"));
    }

    #[test]
    fn seed_range_forms() {
        assert_eq!(
            "3..5"
                .parse::<SeedRange>()
                .unwrap()
                .seeds()
                .collect::<Vec<_>>(),
            [3, 4, 5]
        );
        assert_eq!("3..=3".parse::<SeedRange>().unwrap().seeds().count(), 1);
        assert!("3".parse::<SeedRange>().is_err());
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(
            (
                Exit::Success.code(),
                Exit::Failure.code(),
                Exit::Usage.code()
            ),
            (0, 1, 2)
        );
    }
}
