use crate::{Addr, CoreId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LockError {
    #[error("core {0} probed a lock it already holds")]
    ReacquireByHolder(CoreId),
    #[error("core {0} released a lock it does not hold")]
    ReleaseByNonHolder(CoreId),
}

/// Test-and-set lock. The lock word is a byte in shared memory and drives
/// the semantics; `held_by` mirrors it for invariant checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinLock {
    addr: Addr,
    held_by: Option<CoreId>,
    probes: u64,
    failed_probes: u64,
}

impl SpinLock {
    pub fn new(addr: Addr) -> Self {
        Self {
            addr,
            held_by: None,
            probes: 0,
            failed_probes: 0,
        }
    }

    pub fn addr(&self) -> Addr {
        self.addr
    }

    pub fn held_by(&self) -> Option<CoreId> {
        self.held_by
    }

    pub fn probes(&self) -> u64 {
        self.probes
    }

    pub fn failed_probes(&self) -> u64 {
        self.failed_probes
    }

    /// Records one test-and-set whose prior word value was `prior`. Returns
    /// whether the probe acquired the lock. A probe by the holder is still
    /// recorded (and fails, since the word is 1) before the error is raised.
    pub fn record_probe(&mut self, core: CoreId, prior: u8) -> Result<bool, LockError> {
        self.probes += 1;
        if prior == 0 {
            self.held_by = Some(core);
            return Ok(true);
        }
        self.failed_probes += 1;
        if self.held_by == Some(core) {
            return Err(LockError::ReacquireByHolder(core));
        }
        Ok(false)
    }

    pub fn release(&mut self, core: CoreId) -> Result<(), LockError> {
        if self.held_by != Some(core) {
            return Err(LockError::ReleaseByNonHolder(core));
        }
        self.held_by = None;
        Ok(())
    }

    /// Word and mirror must agree.
    pub fn check(&self, word: u8) -> Result<(), &'static str> {
        match (word, self.held_by) {
            (0, None) | (1, Some(_)) => Ok(()),
            (0 | 1, _) => Err("lock word disagrees with holder"),
            _ => Err("lock word outside {0, 1}"),
        }
    }
}
