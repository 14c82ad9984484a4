//! One simulation cell: build the workload, run it, check the result.

use alloc::string::String;

use crate::config::SimConfig;
use crate::engine::{InitError, RunError, System};
use crate::memhier::AccessFault;
use crate::stats::RunResult;
use crate::workloads::{Verdict, Workload};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CellError {
    #[error(transparent)]
    Init(#[from] InitError),
    #[error("preamble: {0}")]
    Preamble(AccessFault),
    #[error(transparent)]
    Run(#[from] RunError),
}

/// A finished cell. `result.correctness_ok` mirrors `verdict.ok`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub result: RunResult,
    pub verdict: Verdict,
}

impl CellOutcome {
    pub fn detail(&self) -> &str {
        &self.verdict.detail
    }
}

/// Builds the system for `cfg` with its workload installed.
pub fn prepare(cfg: &SimConfig) -> Result<(System, Workload), CellError> {
    let workload = Workload::build(cfg);
    let mut sys = System::new(cfg.clone(), workload.programs.clone(), workload.regions)?;
    workload
        .install(sys.hierarchy_mut())
        .map_err(CellError::Preamble)?;
    Ok((sys, workload))
}

/// Runs `cfg.benchmark` under `cfg.backend` with `cfg.seed`.
pub fn run_cell(cfg: &SimConfig) -> Result<CellOutcome, CellError> {
    let (mut sys, workload) = prepare(cfg)?;
    sys.run()?;
    Ok(finish(&sys, &workload, cfg.seed))
}

/// Oracle check and metric collection for a system that ran to completion.
pub fn finish(sys: &System, workload: &Workload, seed: u64) -> CellOutcome {
    let verdict = workload.verify(sys.hierarchy());
    let result = RunResult::collect(sys, workload.benchmark, seed, verdict.ok);
    CellOutcome { result, verdict }
}

/// Short label for diagnostics.
pub fn cell_label(cfg: &SimConfig) -> String {
    alloc::format!("({}, {}, seed {})", cfg.benchmark, cfg.backend, cfg.seed)
}
