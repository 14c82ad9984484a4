//! Functional memory hierarchy: address map, per-core direct-mapped D1 and
//! TLB (tag-only), write-through no-allocate stores with snoop-invalidate
//! coherence, and byte-accurate backing memories.
//!
//! Accesses are performed atomically when they are issued. The returned
//! [`AccessResult`] carries the latency without bus queueing; the engine adds
//! the bus wait once the arbiter grants the transfer.

mod cache;
mod map;
mod tlb;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

pub use cache::{snoop_invalidate, CacheCounters, DirectMappedCache, Probe};
pub use map::{AddressMap, Region};
pub use tlb::{Outcome, Tlb, TlbCounters};

use crate::config::{Latencies, SimConfig};
use crate::energy::EnergyEventKind;
use crate::{Addr, CoreId};

/// Largest single access in bytes.
pub const MAX_ACCESS: usize = 16;

/// Up to 16 bytes carried inline by a read or write.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Data {
    len: u8,
    buf: [u8; MAX_ACCESS],
}

impl Data {
    /// Panics if `bytes` is longer than [`MAX_ACCESS`].
    pub fn new(bytes: &[u8]) -> Self {
        assert!(bytes.len() <= MAX_ACCESS, "access wider than 16 bytes");
        let mut buf = [0; MAX_ACCESS];
        buf[..bytes.len()].copy_from_slice(bytes);
        Self {
            len: bytes.len() as u8,
            buf,
        }
    }

    pub fn from_u64(v: u64) -> Self {
        Self::new(&v.to_le_bytes())
    }

    pub fn from_pair(a: u64, b: u64) -> Self {
        let mut buf = [0; MAX_ACCESS];
        buf[..8].copy_from_slice(&a.to_le_bytes());
        buf[8..].copy_from_slice(&b.to_le_bytes());
        Self { len: 16, buf }
    }

    pub fn u64_at(&self, offset: usize) -> u64 {
        let mut w = [0; 8];
        w.copy_from_slice(&self[offset..offset + 8]);
        u64::from_le_bytes(w)
    }

    pub fn as_u64(&self) -> u64 {
        self.u64_at(0)
    }
}

impl Deref for Data {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.buf[..self.len as usize]
    }
}

impl fmt::Debug for Data {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x")?;
        for b in self.iter() {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AccessFault {
    #[error("address {0:#x} is unmapped")]
    Unmapped(Addr),
    #[error("core {core} touched private memory of another core at {addr:#x}")]
    ForeignPrivate { core: CoreId, addr: Addr },
    #[error("{size}-byte access at {addr:#x} crosses a cache line")]
    LineCrossing { addr: Addr, size: usize },
    #[error("access size {0} outside 1..=16")]
    BadSize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AccessKind {
    Load,
    Store,
    /// Atomic read-modify-write (test-and-set).
    Rmw,
}

/// Energy events of one access, at most one per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventSet {
    items: [Option<EnergyEventKind>; 4],
}

impl EventSet {
    pub fn push(&mut self, kind: EnergyEventKind) {
        let slot = self
            .items
            .iter_mut()
            .find(|s| s.is_none())
            .expect("event set overflow");
        *slot = Some(kind);
    }

    pub fn contains(&self, kind: EnergyEventKind) -> bool {
        self.items.contains(&Some(kind))
    }

    pub fn iter(&self) -> impl Iterator<Item = EnergyEventKind> + '_ {
        self.items.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessResult {
    pub kind: AccessKind,
    pub paddr: Addr,
    pub region: Region,
    /// Cycles excluding bus queueing.
    pub latency: u64,
    /// The access occupies the shared bus for one transfer.
    pub bus: bool,
    pub events: EventSet,
    pub d1: Probe,
    pub tlb: Outcome,
    /// Copies dropped from other cores' caches.
    pub invalidations: usize,
}

/// Byte array per physical memory: `num_cores` private then the shared ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    mems: Vec<Vec<u8>>,
}

impl MemoryImage {
    pub fn new(cfg: &SimConfig) -> Self {
        let mut mems = vec![vec![0; cfg.private_mem_bytes as usize]; cfg.num_cores];
        mems.extend((0..cfg.shared_mem_count).map(|_| vec![0; cfg.shared_mem_bytes as usize]));
        Self { mems }
    }

    pub fn memory(&self, idx: usize) -> &[u8] {
        &self.mems[idx]
    }

    fn slice(&self, map: &AddressMap, addr: Addr, len: usize) -> Option<&[u8]> {
        let (m, off) = map.locate(addr)?;
        self.mems[m].get(off..off + len)
    }

    fn slice_mut(&mut self, map: &AddressMap, addr: Addr, len: usize) -> Option<&mut [u8]> {
        let (m, off) = map.locate(addr)?;
        self.mems[m].get_mut(off..off + len)
    }
}

/// Memory-side state of a whole system.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    map: AddressMap,
    image: MemoryImage,
    d1: Vec<DirectMappedCache>,
    tlb: Vec<Tlb>,
    lat: Latencies,
    line_bytes: u64,
}

impl Hierarchy {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            map: AddressMap::new(cfg),
            image: MemoryImage::new(cfg),
            d1: vec![DirectMappedCache::new(cfg.d1_size_bytes, cfg.d1_line_bytes); cfg.num_cores],
            tlb: vec![Tlb::new(cfg.tlb_entries, cfg.page_size_bytes); cfg.num_cores],
            lat: cfg.lat,
            line_bytes: cfg.d1_line_bytes,
        }
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn image(&self) -> &MemoryImage {
        &self.image
    }

    pub fn d1(&self, core: CoreId) -> &DirectMappedCache {
        &self.d1[core]
    }

    pub fn tlb(&self, core: CoreId) -> &Tlb {
        &self.tlb[core]
    }

    pub fn line_bytes(&self) -> u64 {
        self.line_bytes
    }

    pub fn line_of(&self, addr: Addr) -> Addr {
        addr - addr % self.line_bytes
    }

    pub fn classify(&self, addr: Addr) -> Region {
        self.map.classify(addr)
    }

    /// Uncounted read used by preambles, oracles and transactional buffers.
    pub fn peek(&self, addr: Addr, len: usize) -> Option<&[u8]> {
        self.image.slice(&self.map, addr, len)
    }

    /// Uncounted write that bypasses the caches (workload preambles).
    pub fn poke(&mut self, addr: Addr, bytes: &[u8]) -> Result<(), AccessFault> {
        self.image
            .slice_mut(&self.map, addr, bytes.len())
            .ok_or(AccessFault::Unmapped(addr))?
            .copy_from_slice(bytes);
        Ok(())
    }

    /// Validates size, mapping, ownership and line containment of an access.
    pub fn check_access(
        &self,
        core: CoreId,
        vaddr: Addr,
        size: usize,
    ) -> Result<Region, AccessFault> {
        if size == 0 || size > MAX_ACCESS {
            return Err(AccessFault::BadSize(size));
        }
        let region = self.map.classify(vaddr);
        match region {
            Region::Unmapped => return Err(AccessFault::Unmapped(vaddr)),
            Region::PrivateOf(c) if c != core => {
                return Err(AccessFault::ForeignPrivate { core, addr: vaddr })
            }
            _ => {}
        }
        if self.map.classify(vaddr + size as u64 - 1) != region {
            return Err(AccessFault::Unmapped(vaddr + size as u64 - 1));
        }
        if vaddr / self.line_bytes != (vaddr + size as u64 - 1) / self.line_bytes {
            return Err(AccessFault::LineCrossing { addr: vaddr, size });
        }
        Ok(region)
    }

    /// TLB lookup for `core`. Identity mapping; faults on unmapped or
    /// foreign-private addresses.
    pub fn translate(&mut self, core: CoreId, vaddr: Addr) -> Result<(Addr, Outcome), AccessFault> {
        self.check_access(core, vaddr, 1)?;
        Ok(self.tlb[core].translate(vaddr))
    }

    fn begin(
        &mut self,
        core: CoreId,
        vaddr: Addr,
        size: usize,
        kind: AccessKind,
    ) -> Result<AccessResult, AccessFault> {
        let region = self.check_access(core, vaddr, size)?;
        let (paddr, tlb) = self.tlb[core].translate(vaddr);
        let mut events = EventSet::default();
        let mut latency = 0;
        match tlb {
            Outcome::Hit => events.push(EnergyEventKind::TlbHit),
            Outcome::Miss => {
                events.push(EnergyEventKind::TlbMissWalk);
                latency += self.lat.tlb_miss_walk;
            }
        }
        let d1 = self.d1[core].probe(paddr);
        Ok(AccessResult {
            kind,
            paddr,
            region,
            latency,
            bus: false,
            events,
            d1,
            tlb,
            invalidations: 0,
        })
    }

    fn memory_side(&self, r: &mut AccessResult) {
        if r.region.is_shared() {
            r.events.push(EnergyEventKind::SharedMemAccess);
            r.events.push(EnergyEventKind::BusTransfer);
            r.bus = true;
            r.latency += self.lat.shared_access;
        } else {
            r.events.push(EnergyEventKind::PrivateMemAccess);
            r.latency += self.lat.private_access;
        }
    }

    pub fn load(
        &mut self,
        core: CoreId,
        vaddr: Addr,
        size: usize,
    ) -> Result<(Data, AccessResult), AccessFault> {
        let mut r = self.begin(core, vaddr, size, AccessKind::Load)?;
        if r.d1.is_hit() {
            r.events.push(EnergyEventKind::D1Hit);
            r.latency += self.lat.d1_hit;
        } else {
            r.events.push(EnergyEventKind::D1MissRefill);
            r.latency += self.lat.d1_miss_penalty;
            self.memory_side(&mut r);
            self.d1[core].fill(r.paddr);
        }
        let data = Data::new(self.image.slice(&self.map, r.paddr, size).expect("checked"));
        Ok((data, r))
    }

    /// Write-through, no-write-allocate. Shared stores invalidate every other
    /// cached copy.
    pub fn store(
        &mut self,
        core: CoreId,
        vaddr: Addr,
        bytes: &[u8],
    ) -> Result<AccessResult, AccessFault> {
        let mut r = self.begin(core, vaddr, bytes.len(), AccessKind::Store)?;
        r.latency += self.lat.d1_hit;
        if r.d1.is_hit() {
            r.events.push(EnergyEventKind::D1Hit);
        }
        self.memory_side(&mut r);
        self.image
            .slice_mut(&self.map, r.paddr, bytes.len())
            .expect("checked")
            .copy_from_slice(bytes);
        if r.region.is_shared() {
            r.invalidations = snoop_invalidate(&mut self.d1, r.paddr, core);
        }
        Ok(r)
    }

    /// Write-back of one buffered line at transaction commit: a single
    /// shared store of the bytes selected by `mask`.
    pub fn store_masked(
        &mut self,
        core: CoreId,
        line: Addr,
        data: &[u8],
        mask: &[bool],
    ) -> Result<AccessResult, AccessFault> {
        let mut r = self.begin(core, line, 1, AccessKind::Store)?;
        r.latency += self.lat.d1_hit;
        if r.d1.is_hit() {
            r.events.push(EnergyEventKind::D1Hit);
        }
        self.memory_side(&mut r);
        let dst = self
            .image
            .slice_mut(&self.map, line, data.len())
            .ok_or(AccessFault::Unmapped(line))?;
        for ((d, &s), &m) in dst.iter_mut().zip(data).zip(mask) {
            if m {
                *d = s;
            }
        }
        if r.region.is_shared() {
            r.invalidations = snoop_invalidate(&mut self.d1, r.paddr, core);
        }
        Ok(r)
    }

    /// Atomic swap of one byte through the cache: refills on a miss, then a
    /// single memory-side read-modify-write that invalidates other copies.
    pub fn swap_byte(
        &mut self,
        core: CoreId,
        vaddr: Addr,
        new: u8,
    ) -> Result<(u8, AccessResult), AccessFault> {
        let mut r = self.begin(core, vaddr, 1, AccessKind::Rmw)?;
        if r.d1.is_hit() {
            r.events.push(EnergyEventKind::D1Hit);
            r.latency += self.lat.d1_hit;
        } else {
            r.events.push(EnergyEventKind::D1MissRefill);
            r.latency += self.lat.d1_miss_penalty;
            self.d1[core].fill(r.paddr);
        }
        self.memory_side(&mut r);
        let cell = &mut self
            .image
            .slice_mut(&self.map, r.paddr, 1)
            .expect("checked")[0];
        let prior = *cell;
        *cell = new;
        if r.region.is_shared() {
            r.invalidations = snoop_invalidate(&mut self.d1, r.paddr, core);
        }
        Ok((prior, r))
    }
}
