//! Benchmark thread programs and their correctness oracles.

pub mod barrier;
pub mod fft;
pub mod layout;
pub mod micro;
pub mod program;
pub mod rbtree;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use program::{AbstractOp, ProgramCursor, ScriptCx, Segment, Step, ThreadProgram, Yield};

use crate::config::{Benchmark, SimConfig};
use crate::memhier::{AccessFault, AddressMap, Data, Hierarchy};
use crate::Addr;
use layout::{FftLayout, MicroLayout, RbLayout};

#[derive(Debug, Clone)]
pub enum Oracle {
    Micro {
        layout: MicroLayout,
        expected: Vec<u64>,
    },
    Rbtree {
        layout: RbLayout,
        expected: BTreeSet<u64>,
    },
    Fft {
        layout: FftLayout,
        input: Vec<f64>,
    },
}

/// Outcome of a workload oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub ok: bool,
    pub detail: String,
}

/// A generated benchmark: one program per core, the preamble that
/// initializes memory, and the oracle for the final state.
#[derive(Debug, Clone)]
pub struct Workload {
    pub benchmark: Benchmark,
    pub programs: Vec<ThreadProgram>,
    pub preamble: Vec<(Addr, Data)>,
    pub regions: usize,
    pub oracle: Oracle,
}

impl Workload {
    /// Generates the benchmark selected by `cfg` for `cfg.seed`.
    pub fn build(cfg: &SimConfig) -> Self {
        let map = AddressMap::new(cfg);
        let regions = layout::regions(cfg);
        match cfg.benchmark {
            Benchmark::Micro => {
                let (programs, expected) = micro::build_micro(cfg, cfg.seed);
                Self {
                    benchmark: cfg.benchmark,
                    programs,
                    preamble: Vec::new(),
                    regions,
                    oracle: Oracle::Micro {
                        layout: MicroLayout::new(cfg, &map),
                        expected,
                    },
                }
            }
            Benchmark::Rbtree => {
                let (programs, init, expected) = rbtree::build_rbtree(cfg, cfg.seed);
                Self {
                    benchmark: cfg.benchmark,
                    programs,
                    preamble: init
                        .into_iter()
                        .map(|(a, v)| (a, Data::from_u64(v)))
                        .collect(),
                    regions,
                    oracle: Oracle::Rbtree {
                        layout: RbLayout::new(cfg, &map),
                        expected,
                    },
                }
            }
            Benchmark::Fft => {
                let (programs, preamble, input) = fft::build_fft(cfg, cfg.seed);
                Self {
                    benchmark: cfg.benchmark,
                    programs,
                    preamble,
                    regions,
                    oracle: Oracle::Fft {
                        layout: FftLayout::new(cfg, &map),
                        input,
                    },
                }
            }
        }
    }

    /// Writes the preamble straight into memory, bypassing the caches.
    pub fn install(&self, hier: &mut Hierarchy) -> Result<(), AccessFault> {
        self.preamble.iter().try_for_each(|(a, d)| hier.poke(*a, d))
    }

    pub fn verify(&self, hier: &Hierarchy) -> Verdict {
        match &self.oracle {
            Oracle::Micro { layout, expected } => match micro::micro_verify(hier, layout, expected)
            {
                Ok(total) => Verdict {
                    ok: true,
                    detail: format!("counters sum to {total}"),
                },
                Err(e) => Verdict {
                    ok: false,
                    detail: e,
                },
            },
            Oracle::Rbtree { layout, expected } => {
                match rbtree::rb_verify(hier, layout, expected) {
                    Ok(n) => Verdict {
                        ok: true,
                        detail: format!("valid red-black tree with {n} keys"),
                    },
                    Err(e) => Verdict {
                        ok: false,
                        detail: format!("{e}"),
                    },
                }
            }
            Oracle::Fft { layout, input } => {
                let err = fft::fft_verify(hier, layout, input);
                Verdict {
                    ok: err <= fft::FFT_TOLERANCE,
                    detail: format!("max relative error {err:e}"),
                }
            }
        }
    }

    /// Human-readable listing of every program's segments.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        for (core, p) in self.programs.iter().enumerate() {
            out.push_str(&format!("# core {core}: {} segments\n", p.len()));
            for (i, s) in p.segments().iter().enumerate() {
                out.push_str(&format!("{i:6}  {s:?}\n"));
            }
        }
        out
    }
}
