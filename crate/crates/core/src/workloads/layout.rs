//! Where each benchmark keeps its data in simulated memory.

use alloc::format;
use alloc::string::String;
use alloc::vec;

use crate::config::{Benchmark, SimConfig};
use crate::memhier::AddressMap;
use crate::Addr;

pub const RB_NODE_BYTES: u64 = 40;
pub const RB_KEY: u64 = 0;
pub const RB_COLOR: u64 = 8;
pub const RB_LEFT: u64 = 16;
pub const RB_RIGHT: u64 = 24;
pub const RB_PARENT: u64 = 32;

/// Shared counters, one per region, each in its own line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroLayout {
    pub base: Addr,
    pub stride: u64,
    pub regions: u64,
}

impl MicroLayout {
    pub fn new(cfg: &SimConfig, map: &AddressMap) -> Self {
        Self {
            base: map.shared_base(0),
            stride: cfg.d1_line_bytes,
            regions: cfg.micro.num_regions as u64,
        }
    }

    pub fn counter(&self, region: usize) -> Addr {
        self.base + region as u64 * self.stride
    }

    pub fn bytes(&self) -> u64 {
        self.regions * self.stride
    }
}

/// Red-black tree arena. Node indices start at 1; 0 is the null link.
/// Line 0 holds the root cell; line 1 + t holds thread t's allocator
/// cells `[bump, free_head]`. Thread t allocates from its own slice of
/// `per_thread` nodes starting at `1 + t * per_thread`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RbLayout {
    pub header: Addr,
    pub nodes: Addr,
    pub line_bytes: u64,
    pub threads: u64,
    pub per_thread: u64,
}

impl RbLayout {
    pub fn new(cfg: &SimConfig, map: &AddressMap) -> Self {
        let header = map.shared_base(0);
        let threads = cfg.num_cores as u64;
        Self {
            header,
            nodes: header + (1 + threads) * cfg.d1_line_bytes,
            line_bytes: cfg.d1_line_bytes,
            threads,
            per_thread: cfg.rbtree.ops_per_thread as u64,
        }
    }

    pub fn root_cell(&self) -> Addr {
        self.header
    }

    pub fn bump_cell(&self, thread: usize) -> Addr {
        self.header + (1 + thread as u64) * self.line_bytes
    }

    pub fn free_cell(&self, thread: usize) -> Addr {
        self.bump_cell(thread) + 8
    }

    pub fn first_node(&self, thread: usize) -> u64 {
        1 + thread as u64 * self.per_thread
    }

    pub fn capacity(&self) -> u64 {
        self.threads * self.per_thread
    }

    pub fn node(&self, idx: u64) -> Addr {
        self.nodes + idx * RB_NODE_BYTES
    }

    pub fn bytes(&self) -> u64 {
        self.nodes - self.header + (1 + self.capacity()) * RB_NODE_BYTES
    }
}

/// FFT data in shared memory 0, 16 bytes per complex element. Barrier
/// cells go to shared memory 1 when it exists, else after the data.
/// Twiddles live at the start of every core's private memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FftLayout {
    pub data: Addr,
    pub n: u64,
    pub counter: Addr,
    pub flag: Addr,
    pub line_bytes: u64,
}

impl FftLayout {
    pub fn new(cfg: &SimConfig, map: &AddressMap) -> Self {
        let n = cfg.fft.n as u64;
        let data = map.shared_base(0);
        let cells = if map.shared_count() > 1 {
            map.shared_base(1)
        } else {
            let end = data + n * 16;
            end.div_ceil(cfg.d1_line_bytes) * cfg.d1_line_bytes
        };
        Self {
            data,
            n,
            counter: cells,
            flag: cells + cfg.d1_line_bytes,
            line_bytes: cfg.d1_line_bytes,
        }
    }

    pub fn elem(&self, i: u64) -> Addr {
        self.data + i * 16
    }

    pub fn twiddle(map: &AddressMap, core: usize, k: u64) -> Addr {
        map.private_base(core) + k * 16
    }
}

/// Number of sync regions a benchmark uses.
pub fn regions(cfg: &SimConfig) -> usize {
    match cfg.benchmark {
        Benchmark::Micro => cfg.micro.num_regions as usize,
        Benchmark::Rbtree => 1,
        Benchmark::Fft => 2,
    }
}

/// Checks that the selected benchmark's data, its barrier cells and the
/// lock words fit in the configured memories without overlapping.
pub fn check_fit(cfg: &SimConfig) -> Result<(), String> {
    let map = AddressMap::new(cfg);
    let count = cfg.shared_mem_count;
    let line = cfg.d1_line_bytes;
    let mut used = vec![0u64; count];
    let lock_bytes = regions(cfg) as u64 * line;
    used[count - 1] += lock_bytes;
    match cfg.benchmark {
        Benchmark::Micro => used[0] += MicroLayout::new(cfg, &map).bytes(),
        Benchmark::Rbtree => used[0] += RbLayout::new(cfg, &map).bytes(),
        Benchmark::Fft => {
            let n = cfg.fft.n as u64;
            if count > 1 {
                used[0] += n * 16;
                used[1] += 2 * line;
            } else {
                used[0] += (n * 16).div_ceil(line) * line + 2 * line;
            }
            let twiddles = n / 2 * 16;
            if twiddles > cfg.private_mem_bytes {
                return Err(format!(
                    "fft twiddle table needs {twiddles} bytes of private memory, have {}",
                    cfg.private_mem_bytes
                ));
            }
        }
    }
    for (k, &u) in used.iter().enumerate() {
        if u > cfg.shared_mem_bytes {
            return Err(format!(
                "{} workload needs {u} bytes of shared memory {k}, have {}",
                cfg.benchmark, cfg.shared_mem_bytes
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;

    #[test]
    fn defaults_fit_for_every_benchmark() {
        for b in Benchmark::ALL {
            let mut cfg = default_config();
            cfg.benchmark = b;
            assert_eq!(check_fit(&cfg), Ok(()), "{b}");
        }
    }

    #[test]
    fn rb_cells_are_line_separated() {
        let cfg = default_config();
        let l = RbLayout::new(&cfg, &AddressMap::new(&cfg));
        assert_eq!(l.bump_cell(0) - l.root_cell(), 16);
        assert_eq!(l.bump_cell(3) + 16, l.nodes);
        assert_eq!(l.node(1) % 8, 0);
        assert_eq!(l.first_node(1), 65);
    }

    #[test]
    fn fft_barrier_cells_use_second_memory() {
        let mut cfg = default_config();
        let map = AddressMap::new(&cfg);
        let l = FftLayout::new(&cfg, &map);
        assert_eq!(l.counter, map.shared_base(1));
        cfg.shared_mem_count = 1;
        let map = AddressMap::new(&cfg);
        let l = FftLayout::new(&cfg, &map);
        assert_eq!(l.counter, map.shared_base(0) + 64 * 16);
    }

    #[test]
    fn oversized_tree_is_rejected() {
        let mut cfg = default_config();
        cfg.benchmark = Benchmark::Rbtree;
        cfg.rbtree.ops_per_thread = 1000;
        cfg.rbtree.key_range = 4000;
        assert!(check_fit(&cfg).is_err());
    }
}
