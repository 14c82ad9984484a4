//! Cycle-stepped model of a shared-memory multiprocessor system-on-chip.
//!
//! Four cores with private memories and shared memories hang off one bus.
//! Each core has a direct-mapped data cache and TLB. Parallel benchmarks run
//! on top of one of three interchangeable synchronization backends (a
//! test-and-set spinlock, lazy-versioning transactional memory, or a
//! counting semaphore with a FIFO waiting queue) and every architectural
//! event is charged to an additive energy ledger.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, tracing and
//! the command-line runner live in the `syncsim` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod config;
pub mod energy;
pub mod engine;
pub mod experiment;
pub mod memhier;
pub mod stats;
pub mod sync;
pub mod workloads;

pub use config::{Backend, Benchmark, SimConfig, Violation};
pub use energy::{EnergyEventKind, EnergyLedger};
pub use engine::{RunError, StepReport, System};
pub use experiment::{run_cell, CellOutcome};
pub use stats::RunResult;

/// Processor index, `0..num_cores`.
pub type CoreId = usize;
/// Simulated clock value.
pub type Cycle = u64;
/// Simulated physical/virtual address (identity mapped).
pub type Addr = u64;

/// A protected shared-data region; each region owns one lock word, one
/// semaphore or one transactional scope depending on the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionId(pub usize);

impl core::fmt::Display for RegionId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "r{}", self.0)
    }
}
