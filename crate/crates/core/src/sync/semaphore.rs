use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::CoreId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    Proceed,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SemError {
    #[error("core {0} is already queued on this semaphore")]
    DuplicateWait(CoreId),
    #[error("core {0} signalled without holding the semaphore")]
    OverSignal(CoreId),
}

/// Counting semaphore with a FIFO waiting queue. A signal with waiters hands
/// the permit straight to the queue head, so the count only rises when
/// nobody waits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Semaphore {
    count: u32,
    initial: u32,
    wait_queue: VecDeque<(CoreId, u64)>,
    /// Cores that proceeded and have not signalled yet (a multiset).
    holders: Vec<CoreId>,
    next_ticket: u64,
    last_woken_ticket: Option<u64>,
    fifo_violations: u64,
    blocks: u64,
    wakes: u64,
}

impl Semaphore {
    pub fn new(initial: u32) -> Self {
        Self {
            count: initial,
            initial,
            wait_queue: VecDeque::new(),
            holders: Vec::new(),
            next_ticket: 0,
            last_woken_ticket: None,
            fifo_violations: 0,
            blocks: 0,
            wakes: 0,
        }
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn initial_count(&self) -> u32 {
        self.initial
    }

    pub fn holders(&self) -> &[CoreId] {
        &self.holders
    }

    pub fn queue(&self) -> impl Iterator<Item = CoreId> + '_ {
        self.wait_queue.iter().map(|&(c, _)| c)
    }

    pub fn queue_len(&self) -> usize {
        self.wait_queue.len()
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    pub fn wakes(&self) -> u64 {
        self.wakes
    }

    /// Decrement-or-block.
    pub fn wait(&mut self, core: CoreId) -> Result<WaitOutcome, SemError> {
        if self.wait_queue.iter().any(|&(c, _)| c == core) {
            return Err(SemError::DuplicateWait(core));
        }
        if self.count > 0 {
            self.count -= 1;
            self.holders.push(core);
            Ok(WaitOutcome::Proceed)
        } else {
            self.wait_queue.push_back((core, self.next_ticket));
            self.next_ticket += 1;
            self.blocks += 1;
            Ok(WaitOutcome::Blocked)
        }
    }

    /// Increment-or-wake. Returns the core that now holds the handed-over
    /// permit, if any.
    pub fn signal(&mut self, core: CoreId) -> Result<Option<CoreId>, SemError> {
        let pos = self
            .holders
            .iter()
            .position(|&h| h == core)
            .ok_or(SemError::OverSignal(core))?;
        self.holders.swap_remove(pos);
        match self.wait_queue.pop_front() {
            Some((next, ticket)) => {
                if self.last_woken_ticket.is_some_and(|t| ticket < t) {
                    self.fifo_violations += 1;
                }
                self.last_woken_ticket = Some(ticket);
                self.holders.push(next);
                self.wakes += 1;
                Ok(Some(next))
            }
            None => {
                self.count += 1;
                Ok(None)
            }
        }
    }

    /// Returns the first broken invariant, if any.
    pub fn check(&self) -> Result<(), &'static str> {
        if !self.wait_queue.is_empty() && self.count != 0 {
            return Err("waiters present while count > 0");
        }
        if self.count as usize + self.holders.len() != self.initial as usize {
            return Err("count + holders != initial count");
        }
        if self.initial == 1 && self.holders.len() > 1 {
            return Err("two simultaneous holders of a binary semaphore");
        }
        if self.fifo_violations > 0 {
            return Err("wake order differs from block order");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wait_examples() {
        let mut s = Semaphore::new(1);
        assert_eq!(s.wait(0), Ok(WaitOutcome::Proceed));
        assert_eq!(s.count(), 0);
        assert_eq!(s.wait(3), Ok(WaitOutcome::Blocked));
        assert_eq!(s.queue().collect::<Vec<_>>(), [3]);
        assert_eq!(s.wait(3), Err(SemError::DuplicateWait(3)));

        let mut s = Semaphore::new(4);
        for c in 0..4 {
            assert_eq!(s.wait(c), Ok(WaitOutcome::Proceed));
        }
        assert_eq!(s.count(), 0);
        assert_eq!(s.queue_len(), 0);
        s.check().unwrap();
    }

    #[test]
    fn signal_examples() {
        let mut s = Semaphore::new(1);
        s.wait(0).unwrap();
        s.wait(2).unwrap();
        s.wait(3).unwrap();
        assert_eq!(s.signal(0), Ok(Some(2)));
        assert_eq!(s.queue().collect::<Vec<_>>(), [3]);
        assert_eq!(s.count(), 0);
        s.check().unwrap();

        let mut s = Semaphore::new(1);
        s.wait(1).unwrap();
        assert_eq!(s.signal(1), Ok(None));
        assert_eq!(s.count(), 1);
        assert_eq!(s.signal(1), Err(SemError::OverSignal(1)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Random wait/signal traffic from 4 cores keeps every invariant
            /// and wakes in block order.
            #[test]
            fn invariants_hold(initial in 1u32..4, script in proptest::collection::vec((0usize..4, any::<bool>()), 1..200)) {
                let mut s = Semaphore::new(initial);
                let mut blocked_order = Vec::new();
                let mut woken_order = Vec::new();
                for (core, want_wait) in script {
                    let queued = s.queue().any(|c| c == core);
                    let holds = s.holders().contains(&core);
                    if want_wait && !queued && !holds {
                        if s.wait(core).unwrap() == WaitOutcome::Blocked {
                            blocked_order.push(core);
                        }
                    } else if holds {
                        if let Some(w) = s.signal(core).unwrap() {
                            woken_order.push(w);
                        }
                    }
                    prop_assert_eq!(s.check(), Ok(()));
                }
                prop_assert_eq!(&blocked_order[..woken_order.len()], &woken_order[..]);
            }
        }
    }
}
