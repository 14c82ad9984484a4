use alloc::vec;
use alloc::vec::Vec;

use crate::Addr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Outcome {
    Hit,
    Miss,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TlbCounters {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    valid: bool,
    vpn: u64,
    ppn: u64,
}

/// Direct-mapped TLB indexed by virtual page number. Translation is the
/// identity; only hit/miss behaviour matters.
#[derive(Debug, Clone)]
pub struct Tlb {
    entries: Vec<Entry>,
    page_bytes: u64,
    counters: TlbCounters,
}

impl Tlb {
    pub fn new(entries: u64, page_bytes: u64) -> Self {
        Self {
            entries: vec![Entry::default(); entries as usize],
            page_bytes,
            counters: TlbCounters::default(),
        }
    }

    pub fn translate(&mut self, vaddr: Addr) -> (Addr, Outcome) {
        let vpn = vaddr / self.page_bytes;
        let idx = (vpn % self.entries.len() as u64) as usize;
        let offset = vaddr % self.page_bytes;
        self.counters.accesses += 1;
        let e = &mut self.entries[idx];
        if e.valid && e.vpn == vpn {
            self.counters.hits += 1;
            (e.ppn * self.page_bytes + offset, Outcome::Hit)
        } else {
            self.counters.misses += 1;
            // Identity page table walk.
            *e = Entry {
                valid: true,
                vpn,
                ppn: vpn,
            };
            (vaddr, Outcome::Miss)
        }
    }

    pub fn valid_entries(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }

    pub fn counters(&self) -> TlbCounters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_then_warm() {
        let mut t = Tlb::new(16, 4096);
        assert_eq!(t.translate(0x5123), (0x5123, Outcome::Miss));
        assert_eq!(t.translate(0x5fff), (0x5fff, Outcome::Hit));
    }

    #[test]
    fn colliding_pages_thrash() {
        let mut t = Tlb::new(16, 4096);
        let a = 3 * 4096;
        let b = (3 + 16) * 4096;
        let n = 10;
        for _ in 0..n {
            t.translate(a);
            t.translate(b);
        }
        assert_eq!(t.counters().misses, 2 * n);
    }

    #[test]
    fn sixteen_consecutive_pages_fit() {
        let mut t = Tlb::new(16, 4096);
        for round in 0..2 {
            for p in 40..56u64 {
                let (_, o) = t.translate(p * 4096 + 8);
                assert_eq!(
                    o,
                    if round == 0 {
                        Outcome::Miss
                    } else {
                        Outcome::Hit
                    }
                );
            }
        }
        let k = t.counters();
        assert_eq!((k.misses, k.hits, k.accesses), (16, 16, 32));
    }
}
