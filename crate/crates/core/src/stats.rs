//! Per-run metrics and their tabular form.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::config::{Backend, Benchmark};
use crate::energy::EnergyEventKind;
use crate::engine::System;

/// `misses / (hits + misses)`, or 0 when there were no accesses.
pub fn miss_rate(hits: u64, misses: u64) -> f64 {
    let total = hits + misses;
    if total == 0 {
        0.0
    } else {
        misses as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub benchmark: Benchmark,
    pub backend: Backend,
    pub seed: u64,
    pub cycles: u64,
    pub d1_accesses: u64,
    pub d1_hits: u64,
    pub d1_misses: u64,
    pub d1_miss_rate: f64,
    pub tlb_accesses: u64,
    pub tlb_misses: u64,
    pub shared_accesses: u64,
    pub bus_busy_cycles: u64,
    pub spin_probes: u64,
    pub tx_commits: u64,
    pub tx_aborts: u64,
    pub sem_blocks: u64,
    pub sem_wakes: u64,
    pub energy_total: f64,
    pub energy_by_kind: [f64; EnergyEventKind::COUNT],
    pub correctness_ok: bool,
}

const LEADING: [&str; 18] = [
    "benchmark",
    "backend",
    "seed",
    "cycles",
    "d1_accesses",
    "d1_hits",
    "d1_misses",
    "d1_miss_rate",
    "tlb_accesses",
    "tlb_misses",
    "shared_accesses",
    "bus_busy_cycles",
    "spin_probes",
    "tx_commits",
    "tx_aborts",
    "sem_blocks",
    "sem_wakes",
    "energy_total",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RowError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("column {column}: cannot parse {value:?}")]
    BadValue { column: String, value: String },
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

impl RunResult {
    /// Reads the counters of a finished system.
    pub fn collect(sys: &System, benchmark: Benchmark, seed: u64, correctness_ok: bool) -> Self {
        let h = sys.hierarchy();
        let cores = sys.config().num_cores;
        let (mut d1_hits, mut d1_misses, mut d1_accesses) = (0, 0, 0);
        let (mut tlb_accesses, mut tlb_misses) = (0, 0);
        for c in 0..cores {
            let d = h.d1(c).counters();
            d1_accesses += d.accesses;
            d1_hits += d.hits;
            d1_misses += d.misses;
            let t = h.tlb(c).counters();
            tlb_accesses += t.accesses;
            tlb_misses += t.misses;
        }
        let ledger = sys.ledger();
        let sync = sys.backend().counters();
        let mut energy_by_kind = [0.0; EnergyEventKind::COUNT];
        for k in EnergyEventKind::ALL {
            energy_by_kind[k.index()] = ledger.energy_of(k);
        }
        Self {
            benchmark,
            backend: sys.backend_kind(),
            seed,
            cycles: sys.cycles(),
            d1_accesses,
            d1_hits,
            d1_misses,
            d1_miss_rate: miss_rate(d1_hits, d1_misses),
            tlb_accesses,
            tlb_misses,
            shared_accesses: ledger.count(EnergyEventKind::SharedMemAccess),
            bus_busy_cycles: sys.bus().busy_cycles(),
            spin_probes: sync.spin_probes,
            tx_commits: sync.tx_commits,
            tx_aborts: sync.tx_aborts,
            sem_blocks: sync.sem_blocks,
            sem_wakes: sync.sem_wakes,
            energy_total: ledger.total(),
            energy_by_kind,
            correctness_ok,
        }
    }

    pub fn energy_of(&self, kind: EnergyEventKind) -> f64 {
        self.energy_by_kind[kind.index()]
    }

    /// Column names in output order.
    pub fn columns() -> Vec<String> {
        let mut cols: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
        cols.extend(
            EnergyEventKind::ALL
                .iter()
                .map(|k| format!("energy_{}", k.name())),
        );
        cols.push("correctness_ok".into());
        cols
    }

    /// Field values as emitted; floats carry six decimals.
    pub fn fields(&self) -> Vec<String> {
        let ints = [self.cycles, self.d1_accesses, self.d1_hits, self.d1_misses];
        let mut v = Vec::with_capacity(LEADING.len() + EnergyEventKind::COUNT + 1);
        v.push(self.benchmark.name().to_string());
        v.push(self.backend.name().to_string());
        v.push(self.seed.to_string());
        v.extend(ints.iter().map(u64::to_string));
        v.push(f6(self.d1_miss_rate));
        for x in [
            self.tlb_accesses,
            self.tlb_misses,
            self.shared_accesses,
            self.bus_busy_cycles,
            self.spin_probes,
            self.tx_commits,
            self.tx_aborts,
            self.sem_blocks,
            self.sem_wakes,
        ] {
            v.push(x.to_string());
        }
        v.push(f6(self.energy_total));
        v.extend(self.energy_by_kind.iter().map(|&e| f6(e)));
        v.push(self.correctness_ok.to_string());
        v
    }

    pub fn parse_fields(fields: &[&str]) -> Result<Self, RowError> {
        let cols = Self::columns();
        if fields.len() != cols.len() {
            return Err(RowError::FieldCount {
                expected: cols.len(),
                found: fields.len(),
            });
        }
        let bad = |i: usize| RowError::BadValue {
            column: cols[i].clone(),
            value: fields[i].into(),
        };
        let int = |i: usize| fields[i].parse::<u64>().map_err(|_| bad(i));
        let float = |i: usize| fields[i].parse::<f64>().map_err(|_| bad(i));
        let mut energy_by_kind = [0.0; EnergyEventKind::COUNT];
        for (k, slot) in energy_by_kind.iter_mut().enumerate() {
            *slot = float(LEADING.len() + k)?;
        }
        let last = cols.len() - 1;
        Ok(Self {
            benchmark: fields[0].parse().map_err(|_| bad(0))?,
            backend: fields[1].parse().map_err(|_| bad(1))?,
            seed: int(2)?,
            cycles: int(3)?,
            d1_accesses: int(4)?,
            d1_hits: int(5)?,
            d1_misses: int(6)?,
            d1_miss_rate: float(7)?,
            tlb_accesses: int(8)?,
            tlb_misses: int(9)?,
            shared_accesses: int(10)?,
            bus_busy_cycles: int(11)?,
            spin_probes: int(12)?,
            tx_commits: int(13)?,
            tx_aborts: int(14)?,
            sem_blocks: int(15)?,
            sem_wakes: int(16)?,
            energy_total: float(17)?,
            energy_by_kind,
            correctness_ok: fields[last].parse().map_err(|_| bad(last))?,
        })
    }

    pub fn sort_key(&self) -> (Benchmark, Backend, u64) {
        (self.benchmark, self.backend, self.seed)
    }
}

/// Means over seeds of one (benchmark, backend) cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellMeans {
    pub runs: usize,
    pub cycles: f64,
    pub energy_total: f64,
    pub d1_miss_rate: f64,
}

pub fn cell_means(results: &[RunResult]) -> BTreeMap<(Benchmark, Backend), CellMeans> {
    let mut sums: BTreeMap<(Benchmark, Backend), CellMeans> = BTreeMap::new();
    for r in results {
        let m = sums.entry((r.benchmark, r.backend)).or_default();
        m.runs += 1;
        m.cycles += r.cycles as f64;
        m.energy_total += r.energy_total;
        m.d1_miss_rate += r.d1_miss_rate;
    }
    for m in sums.values_mut() {
        let n = m.runs as f64;
        m.cycles /= n;
        m.energy_total /= n;
        m.d1_miss_rate /= n;
    }
    sums
}
