//! Lazy-versioning transactions with commit-time, committer-wins conflict
//! detection at cache-line granularity.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use crate::config::RetryLimit;
use crate::memhier::Data;
use crate::{Addr, CoreId, Cycle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxStatus {
    Inactive,
    Active,
    Committed,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TxError {
    #[error("core {0} began a transaction while one is active")]
    NestedBegin(CoreId),
    #[error("core {0} has no active transaction")]
    NotActive(CoreId),
}

/// Bytes written by a transaction to one line, with a byte-valid mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineBuffer {
    pub data: Vec<u8>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxContext {
    pub owner: CoreId,
    pub status: TxStatus,
    pub read_set: BTreeSet<Addr>,
    pub write_set: BTreeMap<Addr, LineBuffer>,
    pub start_cycle: Cycle,
    /// Aborts suffered by the current region instance.
    pub retries: u32,
    pub wasted_cycles: u64,
    pub irrevocable: bool,
}

impl TxContext {
    fn new(owner: CoreId) -> Self {
        Self {
            owner,
            status: TxStatus::Inactive,
            read_set: BTreeSet::new(),
            write_set: BTreeMap::new(),
            start_cycle: 0,
            retries: 0,
            wasted_cycles: 0,
            irrevocable: false,
        }
    }

    fn touches_any(&self, lines: &BTreeMap<Addr, LineBuffer>) -> bool {
        lines
            .keys()
            .any(|l| self.read_set.contains(l) || self.write_set.contains_key(l))
    }
}

/// An aborted transaction and the delay before it may retry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Abort {
    pub core: CoreId,
    pub wasted: u64,
    pub backoff: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommitOutcome {
    /// Buffered lines in ascending address order, ready to flush, plus the
    /// transactions the committer knocked out.
    Committed {
        lines: Vec<(Addr, LineBuffer)>,
        victims: Vec<Abort>,
    },
    /// The committer conflicted with an irrevocable transaction and aborted
    /// itself instead.
    ConflictAbort(Abort),
}

#[derive(Debug, Clone)]
pub struct TxManager {
    ctxs: Vec<TxContext>,
    line_bytes: u64,
    backoff_base: u64,
    max_retries: RetryLimit,
    commits: u64,
    aborts: u64,
}

impl TxManager {
    pub fn new(
        num_cores: usize,
        line_bytes: u64,
        backoff_base: u64,
        max_retries: RetryLimit,
    ) -> Self {
        Self {
            ctxs: (0..num_cores).map(TxContext::new).collect(),
            line_bytes,
            backoff_base,
            max_retries,
            commits: 0,
            aborts: 0,
        }
    }

    pub fn ctx(&self, core: CoreId) -> &TxContext {
        &self.ctxs[core]
    }

    pub fn is_active(&self, core: CoreId) -> bool {
        self.ctxs[core].status == TxStatus::Active
    }

    pub fn commits(&self) -> u64 {
        self.commits
    }

    pub fn aborts(&self) -> u64 {
        self.aborts
    }

    fn line_of(&self, addr: Addr) -> Addr {
        addr - addr % self.line_bytes
    }

    pub fn begin(&mut self, core: CoreId, cycle: Cycle) -> Result<(), TxError> {
        let someone_irrevocable = self.ctxs.iter().any(|c| c.irrevocable);
        let limit = self.max_retries;
        let ctx = &mut self.ctxs[core];
        if ctx.status == TxStatus::Active {
            return Err(TxError::NestedBegin(core));
        }
        if ctx.status == TxStatus::Committed {
            ctx.retries = 0;
        }
        ctx.status = TxStatus::Active;
        ctx.read_set.clear();
        ctx.write_set.clear();
        ctx.start_cycle = cycle;
        ctx.irrevocable = match limit {
            RetryLimit::Limited(n) => ctx.retries >= n && !someone_irrevocable,
            RetryLimit::Unlimited => false,
        };
        Ok(())
    }

    /// Whether any byte of `line` is buffered by `core`.
    pub fn has_line(&self, core: CoreId, addr: Addr) -> bool {
        self.ctxs[core].write_set.contains_key(&self.line_of(addr))
    }

    /// Adds the line to the read set and overlays buffered bytes onto
    /// `memory` (the current memory contents at `addr`).
    pub fn read(&mut self, core: CoreId, addr: Addr, memory: &[u8]) -> Result<Data, TxError> {
        let line = self.line_of(addr);
        let ctx = &mut self.ctxs[core];
        if ctx.status != TxStatus::Active {
            return Err(TxError::NotActive(core));
        }
        ctx.read_set.insert(line);
        let mut out = Data::new(memory);
        if let Some(buf) = ctx.write_set.get(&line) {
            let off = (addr - line) as usize;
            let mut bytes = [0u8; 16];
            bytes[..memory.len()].copy_from_slice(memory);
            for (i, b) in bytes[..memory.len()].iter_mut().enumerate() {
                if buf.mask[off + i] {
                    *b = buf.data[off + i];
                }
            }
            out = Data::new(&bytes[..memory.len()]);
        }
        Ok(out)
    }

    /// Buffers a write; nothing reaches memory before commit.
    pub fn write(&mut self, core: CoreId, addr: Addr, bytes: &[u8]) -> Result<(), TxError> {
        let line = self.line_of(addr);
        let lb = self.line_bytes as usize;
        let ctx = &mut self.ctxs[core];
        if ctx.status != TxStatus::Active {
            return Err(TxError::NotActive(core));
        }
        let buf = ctx.write_set.entry(line).or_insert_with(|| LineBuffer {
            data: vec![0; lb],
            mask: vec![false; lb],
        });
        let off = (addr - line) as usize;
        buf.data[off..off + bytes.len()].copy_from_slice(bytes);
        buf.mask[off..off + bytes.len()]
            .iter_mut()
            .for_each(|m| *m = true);
        Ok(())
    }

    fn abort(&mut self, core: CoreId, cycle: Cycle) -> Abort {
        let base = self.backoff_base;
        let ctx = &mut self.ctxs[core];
        let wasted = cycle.saturating_sub(ctx.start_cycle);
        ctx.wasted_cycles += wasted;
        let backoff = base << ctx.retries.min(8);
        ctx.retries += 1;
        ctx.status = TxStatus::Aborted;
        ctx.irrevocable = false;
        ctx.read_set.clear();
        ctx.write_set.clear();
        self.aborts += 1;
        Abort {
            core,
            wasted,
            backoff,
        }
    }

    /// Committer-wins: every other active transaction whose read or write
    /// set overlaps the committer's write set is aborted. An irrevocable
    /// transaction is never a victim; a committer that overlaps one aborts
    /// itself.
    pub fn commit(&mut self, core: CoreId, cycle: Cycle) -> Result<CommitOutcome, TxError> {
        if self.ctxs[core].status != TxStatus::Active {
            return Err(TxError::NotActive(core));
        }
        let conflicting: Vec<CoreId> = {
            let ws = &self.ctxs[core].write_set;
            self.ctxs
                .iter()
                .filter(|c| c.owner != core && c.status == TxStatus::Active && c.touches_any(ws))
                .map(|c| c.owner)
                .collect()
        };
        if conflicting.iter().any(|&c| self.ctxs[c].irrevocable) {
            return Ok(CommitOutcome::ConflictAbort(self.abort(core, cycle)));
        }
        let victims = conflicting
            .into_iter()
            .map(|c| self.abort(c, cycle))
            .collect();
        let ctx = &mut self.ctxs[core];
        ctx.status = TxStatus::Committed;
        ctx.irrevocable = false;
        ctx.read_set.clear();
        let lines = core::mem::take(&mut ctx.write_set).into_iter().collect();
        self.commits += 1;
        Ok(CommitOutcome::Committed { lines, victims })
    }

    /// `Inactive`/`Committed`/`Aborted` contexts carry no read or write set.
    pub fn check(&self) -> Result<(), &'static str> {
        for c in &self.ctxs {
            if c.status != TxStatus::Active && (!c.read_set.is_empty() || !c.write_set.is_empty()) {
                return Err("inactive transaction holds a read or write set");
            }
        }
        if self.ctxs.iter().filter(|c| c.irrevocable).count() > 1 {
            return Err("more than one irrevocable transaction");
        }
        Ok(())
    }
}
