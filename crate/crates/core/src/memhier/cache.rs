use alloc::vec;
use alloc::vec::Vec;

use crate::Addr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    Hit,
    Miss { had_victim: bool },
}

impl Probe {
    pub fn is_hit(self) -> bool {
        matches!(self, Probe::Hit)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheCounters {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub invalidations: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    valid: bool,
    /// Full line number (`paddr / line_bytes`); comparing it subsumes the
    /// index bits.
    tag: u64,
}

/// Tag-only direct-mapped cache. Data always lives in the backing memory.
#[derive(Debug, Clone)]
pub struct DirectMappedCache {
    lines: Vec<Line>,
    line_bytes: u64,
    counters: CacheCounters,
}

impl DirectMappedCache {
    pub fn new(size_bytes: u64, line_bytes: u64) -> Self {
        let n = (size_bytes / line_bytes) as usize;
        Self {
            lines: vec![Line::default(); n],
            line_bytes,
            counters: CacheCounters::default(),
        }
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    pub fn index(&self, paddr: Addr) -> usize {
        ((paddr / self.line_bytes) % self.lines.len() as u64) as usize
    }

    fn tag(&self, paddr: Addr) -> u64 {
        paddr / self.line_bytes
    }

    pub fn contains(&self, paddr: Addr) -> bool {
        let l = self.lines[self.index(paddr)];
        l.valid && l.tag == self.tag(paddr)
    }

    /// Counted lookup; never fills.
    pub fn probe(&mut self, paddr: Addr) -> Probe {
        self.counters.accesses += 1;
        let l = self.lines[self.index(paddr)];
        if l.valid && l.tag == self.tag(paddr) {
            self.counters.hits += 1;
            Probe::Hit
        } else {
            self.counters.misses += 1;
            Probe::Miss {
                had_victim: l.valid,
            }
        }
    }

    pub fn fill(&mut self, paddr: Addr) {
        let idx = self.index(paddr);
        self.lines[idx] = Line {
            valid: true,
            tag: self.tag(paddr),
        };
    }

    /// Drops the line holding `paddr` if present.
    pub fn invalidate(&mut self, paddr: Addr) -> bool {
        let idx = self.index(paddr);
        let tag = self.tag(paddr);
        let l = &mut self.lines[idx];
        if l.valid && l.tag == tag {
            l.valid = false;
            self.counters.invalidations += 1;
            true
        } else {
            false
        }
    }

    pub fn valid_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.valid).count()
    }

    pub fn counters(&self) -> CacheCounters {
        self.counters
    }
}

/// Invalidates `paddr` in every cache except the writer's.
pub fn snoop_invalidate(caches: &mut [DirectMappedCache], paddr: Addr, writer: usize) -> usize {
    caches
        .iter_mut()
        .enumerate()
        .filter(|&(i, _)| i != writer)
        .filter(|(_, c)| c.contains(paddr))
        .map(|(_, c)| c.invalidate(paddr))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_probe_misses_without_victim() {
        let mut c = DirectMappedCache::new(4096, 16);
        assert_eq!(c.probe(0x1234), Probe::Miss { had_victim: false });
        c.fill(0x1234);
        assert_eq!(c.probe(0x1230), Probe::Hit);
        assert_eq!(c.probe(0x123f), Probe::Hit);
    }

    #[test]
    fn same_index_different_tag_evicts() {
        let mut c = DirectMappedCache::new(4096, 16);
        let a = 0x2040;
        c.fill(a);
        assert_eq!(c.index(a), c.index(a + 4096));
        assert_eq!(c.probe(a + 4096), Probe::Miss { had_victim: true });
        c.fill(a + 4096);
        assert_eq!(c.probe(a), Probe::Miss { had_victim: true });
    }

    #[test]
    fn toy_cache_every_line_filled_hits() {
        let mut c = DirectMappedCache::new(64, 16);
        for line in 0..4u64 {
            c.fill(line * 16);
        }
        for line in 0..4u64 {
            for off in [0, 7, 15] {
                assert!(c.probe(line * 16 + off).is_hit());
            }
        }
        let k = c.counters();
        assert_eq!(k.accesses, k.hits + k.misses);
        assert_eq!(k.misses, 0);
    }

    #[test]
    fn snoop_counts_only_other_holders() {
        let mut caches = vec![DirectMappedCache::new(64, 16); 4];
        caches[0].fill(32);
        assert_eq!(snoop_invalidate(&mut caches, 32, 0), 0);
        for c in caches.iter_mut() {
            c.fill(32);
        }
        assert_eq!(snoop_invalidate(&mut caches, 40, 2), 3);
        assert!(caches[2].contains(32));
        for i in [0, 1, 3] {
            assert_eq!(caches[i].probe(32), Probe::Miss { had_victim: false });
            assert_eq!(caches[i].counters().invalidations, 1);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn probe_after_fill_hits_and_alias_misses(addr in 0u64..1 << 30, lines_log in 2u32..9) {
                let size = 16u64 << lines_log;
                let mut c = DirectMappedCache::new(size, 16);
                c.fill(addr);
                prop_assert!(c.probe(addr).is_hit());
                prop_assert_eq!(c.probe(addr + size), Probe::Miss { had_victim: true });
                let k = c.counters();
                prop_assert_eq!(k.accesses, k.hits + k.misses);
            }
        }
    }
}
