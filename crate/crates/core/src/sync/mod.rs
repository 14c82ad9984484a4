//! Three interchangeable synchronization backends behind one region-based
//! interface.
//!
//! * lock: test-and-set on a byte in shared memory, re-probed every
//!   `spin_probe_interval` cycles while the core keeps spinning;
//! * transaction: optimistic regions with buffered writes, flushed at commit;
//! * semaphore: counting semaphore per region with a FIFO waiting queue and
//!   direct permit hand-over on signal.

mod semaphore;
mod spinlock;
mod tx;

use alloc::vec::Vec;

pub use semaphore::{SemError, Semaphore, WaitOutcome};
pub use spinlock::{LockError, SpinLock};
pub use tx::{Abort, CommitOutcome, LineBuffer, TxContext, TxError, TxManager, TxStatus};

use crate::config::{Backend, SemInitPolicy, SimConfig};
use crate::memhier::{AccessFault, AddressMap, Hierarchy};
use crate::{Addr, CoreId, Cycle, RegionId};

/// Lock words sit at the top of the last shared memory, one per line,
/// region 0 highest.
pub fn lock_word_addr(map: &AddressMap, line_bytes: u64, region: RegionId) -> Addr {
    let last = map.shared_count() - 1;
    map.shared_base(last) + map.shared_bytes() - (region.0 as u64 + 1) * line_bytes
}

/// Memory operations a backend needs from the engine.
pub trait SyncPort {
    /// Atomic test-and-set of the byte at `addr`. Returns the prior value
    /// and the cycle at which the probe retires.
    fn test_and_set(
        &mut self,
        core: CoreId,
        addr: Addr,
        cycle: Cycle,
    ) -> Result<(u8, Cycle), AccessFault>;
    /// Plain shared store of one byte; returns the retire cycle.
    fn store_byte(
        &mut self,
        core: CoreId,
        addr: Addr,
        value: u8,
        cycle: Cycle,
    ) -> Result<Cycle, AccessFault>;
    /// Writes one committed line back to memory.
    fn flush_line(&mut self, core: CoreId, line: Addr, buf: &LineBuffer)
        -> Result<(), AccessFault>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnterOutcome {
    Entered,
    Blocked,
    SpinRetry { next_probe_cycle: Cycle },
    TxStarted,
}

/// Result of an enter attempt; `ready_at` is when the enter op retires
/// (unused for `Blocked`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry {
    pub outcome: EnterOutcome,
    pub ready_at: Cycle,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExitEffects {
    pub ready_at: Cycle,
    /// Semaphore: core that received the permit.
    pub woken: Option<CoreId>,
    /// Lock: the word was cleared.
    pub released: bool,
    /// Transaction: lines written back and victims aborted.
    pub flushed_lines: usize,
    pub victims: Vec<Abort>,
    /// Transaction: the committer itself aborted.
    pub self_abort: Option<Abort>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error(transparent)]
    Semaphore(#[from] SemError),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Transaction(#[from] TxError),
    #[error(transparent)]
    Fault(#[from] AccessFault),
    #[error("region {0} does not exist")]
    NoSuchRegion(RegionId),
}

#[derive(Debug, Clone)]
pub enum SyncBackend {
    Lock {
        locks: Vec<SpinLock>,
        probe_interval: u64,
        self_spins: u64,
    },
    Transaction(TxManager),
    Semaphore(Vec<Semaphore>),
}

impl SyncBackend {
    pub fn new(cfg: &SimConfig, map: &AddressMap, regions: usize) -> Self {
        match cfg.backend {
            Backend::Lock => SyncBackend::Lock {
                locks: (0..regions)
                    .map(|r| SpinLock::new(lock_word_addr(map, cfg.d1_line_bytes, RegionId(r))))
                    .collect(),
                probe_interval: cfg.spin_probe_interval,
                self_spins: 0,
            },
            Backend::Transaction => SyncBackend::Transaction(TxManager::new(
                cfg.num_cores,
                cfg.d1_line_bytes,
                cfg.tx_retry_backoff_base,
                cfg.tx_max_retries,
            )),
            Backend::Semaphore => {
                let init = match cfg.sem_init_policy {
                    SemInitPolicy::One => 1,
                    SemInitPolicy::NumProcessors => cfg.num_cores as u32,
                };
                SyncBackend::Semaphore((0..regions).map(|_| Semaphore::new(init)).collect())
            }
        }
    }

    pub fn kind(&self) -> Backend {
        match self {
            SyncBackend::Lock { .. } => Backend::Lock,
            SyncBackend::Transaction(_) => Backend::Transaction,
            SyncBackend::Semaphore(_) => Backend::Semaphore,
        }
    }

    pub fn region_enter(
        &mut self,
        core: CoreId,
        region: RegionId,
        cycle: Cycle,
        port: &mut dyn SyncPort,
    ) -> Result<Entry, SyncError> {
        match self {
            SyncBackend::Semaphore(sems) => {
                let s = sems
                    .get_mut(region.0)
                    .ok_or(SyncError::NoSuchRegion(region))?;
                let outcome = match s.wait(core)? {
                    WaitOutcome::Proceed => EnterOutcome::Entered,
                    WaitOutcome::Blocked => EnterOutcome::Blocked,
                };
                Ok(Entry {
                    outcome,
                    ready_at: cycle + 1,
                })
            }
            SyncBackend::Lock {
                locks,
                probe_interval,
                self_spins,
            } => {
                let l = locks
                    .get_mut(region.0)
                    .ok_or(SyncError::NoSuchRegion(region))?;
                let (prior, done) = port.test_and_set(core, l.addr(), cycle)?;
                let acquired = match l.record_probe(core, prior) {
                    Ok(a) => a,
                    // Spins forever, like a real TAS lock re-taken by its owner.
                    Err(LockError::ReacquireByHolder(_)) => {
                        *self_spins += 1;
                        false
                    }
                    Err(e) => return Err(e.into()),
                };
                if acquired {
                    Ok(Entry {
                        outcome: EnterOutcome::Entered,
                        ready_at: done,
                    })
                } else {
                    let next = done + *probe_interval;
                    Ok(Entry {
                        outcome: EnterOutcome::SpinRetry {
                            next_probe_cycle: next,
                        },
                        ready_at: next,
                    })
                }
            }
            SyncBackend::Transaction(m) => {
                m.begin(core, cycle)?;
                Ok(Entry {
                    outcome: EnterOutcome::TxStarted,
                    ready_at: cycle + 1,
                })
            }
        }
    }

    pub fn region_exit(
        &mut self,
        core: CoreId,
        region: RegionId,
        cycle: Cycle,
        port: &mut dyn SyncPort,
    ) -> Result<ExitEffects, SyncError> {
        let mut fx = ExitEffects {
            ready_at: cycle + 1,
            ..Default::default()
        };
        match self {
            SyncBackend::Semaphore(sems) => {
                let s = sems
                    .get_mut(region.0)
                    .ok_or(SyncError::NoSuchRegion(region))?;
                fx.woken = s.signal(core)?;
            }
            SyncBackend::Lock { locks, .. } => {
                let l = locks
                    .get_mut(region.0)
                    .ok_or(SyncError::NoSuchRegion(region))?;
                l.release(core)?;
                fx.ready_at = port.store_byte(core, l.addr(), 0, cycle)?;
                fx.released = true;
            }
            SyncBackend::Transaction(m) => match m.commit(core, cycle)? {
                CommitOutcome::Committed { lines, victims } => {
                    for (line, buf) in &lines {
                        port.flush_line(core, *line, buf)?;
                    }
                    fx.flushed_lines = lines.len();
                    fx.victims = victims;
                }
                CommitOutcome::ConflictAbort(a) => fx.self_abort = Some(a),
            },
        }
        Ok(fx)
    }

    /// Cores holding `region` right now (lock holder or semaphore holders).
    pub fn holders(&self, region: RegionId) -> Vec<CoreId> {
        match self {
            SyncBackend::Lock { locks, .. } => locks[region.0].held_by().into_iter().collect(),
            SyncBackend::Semaphore(sems) => sems[region.0].holders().to_vec(),
            SyncBackend::Transaction(_) => Vec::new(),
        }
    }

    pub fn semaphore(&self, region: RegionId) -> Option<&Semaphore> {
        match self {
            SyncBackend::Semaphore(sems) => sems.get(region.0),
            _ => None,
        }
    }

    pub fn semaphore_mut(&mut self, region: RegionId) -> Option<&mut Semaphore> {
        match self {
            SyncBackend::Semaphore(sems) => sems.get_mut(region.0),
            _ => None,
        }
    }

    pub fn tx(&self) -> Option<&TxManager> {
        match self {
            SyncBackend::Transaction(m) => Some(m),
            _ => None,
        }
    }

    pub fn tx_mut(&mut self) -> Option<&mut TxManager> {
        match self {
            SyncBackend::Transaction(m) => Some(m),
            _ => None,
        }
    }

    /// True if some semaphore could still admit a waiter.
    pub fn has_surplus(&self) -> bool {
        match self {
            SyncBackend::Semaphore(sems) => sems.iter().any(|s| s.count() > 0),
            _ => false,
        }
    }

    /// Checks backend invariants against the current memory contents.
    pub fn audit(&self, hier: &Hierarchy) -> Result<(), &'static str> {
        match self {
            SyncBackend::Semaphore(sems) => sems.iter().try_for_each(Semaphore::check),
            SyncBackend::Lock { locks, .. } => locks.iter().try_for_each(|l| {
                let word = hier.peek(l.addr(), 1).ok_or("lock word unmapped")?[0];
                l.check(word)
            }),
            SyncBackend::Transaction(m) => m.check(),
        }
    }

    pub fn counters(&self) -> SyncCounters {
        match self {
            SyncBackend::Lock {
                locks, self_spins, ..
            } => SyncCounters {
                spin_probes: locks.iter().map(SpinLock::probes).sum(),
                failed_probes: locks.iter().map(SpinLock::failed_probes).sum(),
                self_spins: *self_spins,
                ..Default::default()
            },
            SyncBackend::Transaction(m) => SyncCounters {
                tx_commits: m.commits(),
                tx_aborts: m.aborts(),
                ..Default::default()
            },
            SyncBackend::Semaphore(sems) => SyncCounters {
                sem_blocks: sems.iter().map(Semaphore::blocks).sum(),
                sem_wakes: sems.iter().map(Semaphore::wakes).sum(),
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SyncCounters {
    pub spin_probes: u64,
    pub failed_probes: u64,
    pub self_spins: u64,
    pub tx_commits: u64,
    pub tx_aborts: u64,
    pub sem_blocks: u64,
    pub sem_wakes: u64,
}
