//! Simulation configuration. A run is a pure function of `(SimConfig, seed)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::energy::EnergyCoefficients;
use crate::workloads::layout;

/// Synchronization backend guarding every region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Backend {
    Lock,
    Transaction,
    Semaphore,
}

impl Backend {
    pub const ALL: [Backend; 3] = [Backend::Lock, Backend::Transaction, Backend::Semaphore];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Lock => "lock",
            Backend::Transaction => "transaction",
            Backend::Semaphore => "semaphore",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Benchmark {
    Rbtree,
    Fft,
    Micro,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::Rbtree, Benchmark::Fft, Benchmark::Micro];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Rbtree => "rbtree",
            Benchmark::Fft => "fft",
            Benchmark::Micro => "micro",
        }
    }
}

/// Initial semaphore count per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemInitPolicy {
    /// Binary semaphore: mutual exclusion per region.
    One,
    /// Count equal to the number of cores; never blocks when every core runs
    /// one thread.
    NumProcessors,
}

impl SemInitPolicy {
    pub fn name(self) -> &'static str {
        match self {
            SemInitPolicy::One => "one",
            SemInitPolicy::NumProcessors => "num_processors",
        }
    }
}

macro_rules! impl_from_str {
    ($ty:ty, $($variant:expr),+) => {
        impl FromStr for $ty {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                [$($variant),+].into_iter().find(|v| v.name() == s).ok_or(())
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

impl_from_str!(
    Backend,
    Backend::Lock,
    Backend::Transaction,
    Backend::Semaphore
);
impl_from_str!(
    Benchmark,
    Benchmark::Rbtree,
    Benchmark::Fft,
    Benchmark::Micro
);
impl_from_str!(
    SemInitPolicy,
    SemInitPolicy::One,
    SemInitPolicy::NumProcessors
);

/// Retry budget before a transaction turns irrevocable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetryLimit {
    Unlimited,
    Limited(u32),
}

impl fmt::Display for RetryLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetryLimit::Unlimited => f.write_str("unlimited"),
            RetryLimit::Limited(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for RetryLimit {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        if s == "unlimited" {
            Ok(RetryLimit::Unlimited)
        } else {
            s.parse().map(RetryLimit::Limited).map_err(|_| ())
        }
    }
}

/// Latencies in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Latencies {
    pub d1_hit: u64,
    pub d1_miss_penalty: u64,
    pub tlb_miss_walk: u64,
    pub private_access: u64,
    pub shared_access: u64,
}

impl Default for Latencies {
    fn default() -> Self {
        Self {
            d1_hit: 1,
            d1_miss_penalty: 10,
            tlb_miss_walk: 20,
            private_access: 2,
            shared_access: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RbtreeParams {
    pub ops_per_thread: u32,
    pub key_range: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FftParams {
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MicroParams {
    pub iters_per_thread: u32,
    pub num_regions: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub num_cores: usize,
    pub d1_size_bytes: u64,
    pub d1_line_bytes: u64,
    pub tlb_entries: u64,
    pub page_size_bytes: u64,
    pub private_mem_bytes: u64,
    pub shared_mem_count: usize,
    pub shared_mem_bytes: u64,
    pub bus_cycles_per_transfer: u64,
    pub lat: Latencies,
    pub energy_coeff: EnergyCoefficients,
    pub backend: Backend,
    pub sem_init_policy: SemInitPolicy,
    pub spin_probe_interval: u64,
    pub tx_retry_backoff_base: u64,
    pub tx_max_retries: RetryLimit,
    pub benchmark: Benchmark,
    pub rbtree: RbtreeParams,
    pub fft: FftParams,
    pub micro: MicroParams,
    pub seed: u64,
    pub max_cycles: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> SimConfig {
    SimConfig {
        num_cores: 4,
        d1_size_bytes: 4096,
        d1_line_bytes: 16,
        tlb_entries: 16,
        page_size_bytes: 4096,
        private_mem_bytes: 65536,
        shared_mem_count: 2,
        shared_mem_bytes: 65536,
        bus_cycles_per_transfer: 2,
        lat: Latencies::default(),
        energy_coeff: EnergyCoefficients::default(),
        backend: Backend::Semaphore,
        sem_init_policy: SemInitPolicy::One,
        spin_probe_interval: 4,
        tx_retry_backoff_base: 8,
        tx_max_retries: RetryLimit::Unlimited,
        benchmark: Benchmark::Micro,
        rbtree: RbtreeParams {
            ops_per_thread: 64,
            key_range: 1024,
        },
        fft: FftParams { n: 64 },
        micro: MicroParams {
            iters_per_thread: 256,
            num_regions: 1,
        },
        seed: 1,
        max_cycles: 10_000_000,
    }
}

/// A broken configuration rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl SimConfig {
    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn num_lines(&self) -> u64 {
        self.d1_size_bytes / self.d1_line_bytes
    }
}

pub fn validate(cfg: &SimConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, rule: String| out.push(Violation { field, rule });

    if cfg.num_cores < 1 {
        bad("num_cores", "must be at least 1".into());
    }
    for (field, v) in [
        ("d1_size_bytes", cfg.d1_size_bytes),
        ("d1_line_bytes", cfg.d1_line_bytes),
        ("page_size_bytes", cfg.page_size_bytes),
    ] {
        if !v.is_power_of_two() {
            bad(field, format!("{v} is not a power of two"));
        }
    }
    if cfg.d1_line_bytes < 16 {
        bad(
            "d1_line_bytes",
            "must be at least 16 (largest single access)".into(),
        );
    }
    if cfg.d1_line_bytes > cfg.d1_size_bytes {
        bad("d1_line_bytes", "must not exceed d1_size_bytes".into());
    } else if cfg.d1_line_bytes != 0 && !cfg.d1_size_bytes.is_multiple_of(cfg.d1_line_bytes) {
        bad("d1_line_bytes", "must divide d1_size_bytes".into());
    }
    if cfg.page_size_bytes < cfg.d1_line_bytes {
        bad("page_size_bytes", "must be at least d1_line_bytes".into());
    }
    if cfg.tlb_entries < 1 {
        bad("tlb_entries", "must be at least 1".into());
    }
    if cfg.shared_mem_count < 1 {
        bad("shared_mem_count", "must be at least 1".into());
    }
    for (field, v) in [
        ("private_mem_bytes", cfg.private_mem_bytes),
        ("shared_mem_bytes", cfg.shared_mem_bytes),
    ] {
        if v == 0 || (cfg.page_size_bytes.is_power_of_two() && v % cfg.page_size_bytes != 0) {
            bad(
                field,
                "must be a nonzero multiple of page_size_bytes".into(),
            );
        }
    }
    for (field, v) in [
        ("bus_cycles_per_transfer", cfg.bus_cycles_per_transfer),
        ("lat.d1_hit", cfg.lat.d1_hit),
        ("lat.d1_miss_penalty", cfg.lat.d1_miss_penalty),
        ("lat.tlb_miss_walk", cfg.lat.tlb_miss_walk),
        ("lat.private_access", cfg.lat.private_access),
        ("lat.shared_access", cfg.lat.shared_access),
        ("spin_probe_interval", cfg.spin_probe_interval),
        ("tx_retry_backoff_base", cfg.tx_retry_backoff_base),
        ("max_cycles", cfg.max_cycles),
    ] {
        if v < 1 {
            bad(field, "must be at least 1".into());
        }
    }
    for (kind, c) in cfg.energy_coeff.iter() {
        if !(c >= 0.0 && c.is_finite()) {
            bad(
                "energy_coeff",
                format!("{kind} coefficient {c} must be finite and >= 0"),
            );
        }
    }
    let n = cfg.fft.n;
    if !n.is_power_of_two() {
        bad("fft.n", format!("{n} is not a power of two"));
    } else if n < 2 {
        bad("fft.n", "must be at least 2".into());
    }
    if cfg.num_cores >= 1 && !(n as usize).is_multiple_of(cfg.num_cores) {
        bad("fft.n", format!("{n} is not divisible by num_cores"));
    }
    if cfg.micro.num_regions < 1 {
        bad("micro.num_regions", "must be at least 1".into());
    }
    let total_ops = cfg.num_cores as u64 * cfg.rbtree.ops_per_thread as u64;
    if cfg.rbtree.key_range < total_ops {
        bad(
            "rbtree.key_range",
            format!("must be at least num_cores * ops_per_thread = {total_ops}"),
        );
    }

    if out.is_empty() {
        // Geometry is sane; check that the selected workload fits in memory.
        if let Err(rule) = layout::check_fit(cfg) {
            out.push(Violation {
                field: "shared_mem_bytes",
                rule,
            });
        }
    }
    out
}
