use crate::config::SimConfig;
use crate::{Addr, CoreId};

/// Where an address lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Region {
    PrivateOf(CoreId),
    Shared(usize),
    Unmapped,
}

impl Region {
    pub fn is_shared(self) -> bool {
        matches!(self, Region::Shared(_))
    }
}

/// Private memory of core `c` starts at `c * private_stride`; shared memory
/// `k` starts above all private memories. Bases are page aligned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    num_cores: usize,
    private_bytes: u64,
    private_stride: u64,
    shared_count: usize,
    shared_bytes: u64,
    shared_stride: u64,
}

fn align_up(v: u64, to: u64) -> u64 {
    v.div_ceil(to) * to
}

impl AddressMap {
    pub fn new(cfg: &SimConfig) -> Self {
        let page = cfg.page_size_bytes.max(1);
        Self {
            num_cores: cfg.num_cores,
            private_bytes: cfg.private_mem_bytes,
            private_stride: align_up(cfg.private_mem_bytes, page),
            shared_count: cfg.shared_mem_count,
            shared_bytes: cfg.shared_mem_bytes,
            shared_stride: align_up(cfg.shared_mem_bytes, page),
        }
    }

    pub fn num_cores(&self) -> usize {
        self.num_cores
    }

    pub fn shared_count(&self) -> usize {
        self.shared_count
    }

    pub fn private_base(&self, core: CoreId) -> Addr {
        core as u64 * self.private_stride
    }

    pub fn private_bytes(&self) -> u64 {
        self.private_bytes
    }

    pub fn shared_base(&self, k: usize) -> Addr {
        self.num_cores as u64 * self.private_stride + k as u64 * self.shared_stride
    }

    pub fn shared_bytes(&self) -> u64 {
        self.shared_bytes
    }

    pub fn classify(&self, addr: Addr) -> Region {
        let shared_start = self.shared_base(0);
        if addr < shared_start {
            let core = (addr / self.private_stride) as usize;
            if addr - self.private_base(core) < self.private_bytes {
                return Region::PrivateOf(core);
            }
            return Region::Unmapped;
        }
        let k = ((addr - shared_start) / self.shared_stride) as usize;
        if k < self.shared_count && addr - self.shared_base(k) < self.shared_bytes {
            Region::Shared(k)
        } else {
            Region::Unmapped
        }
    }

    /// Memory index in a [`super::MemoryImage`] and the offset within it.
    pub(crate) fn locate(&self, addr: Addr) -> Option<(usize, usize)> {
        match self.classify(addr) {
            Region::PrivateOf(c) => Some((c, (addr - self.private_base(c)) as usize)),
            Region::Shared(k) => Some((self.num_cores + k, (addr - self.shared_base(k)) as usize)),
            Region::Unmapped => None,
        }
    }
}
