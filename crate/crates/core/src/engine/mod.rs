//! Cycle-stepped execution core.
//!
//! Each cycle the engine promotes cores made ready in the previous cycle,
//! expires abort-backoff timers, then lets every running core whose
//! in-flight operation has retired issue its next operation. Issue order
//! within a cycle is: newly promoted cores in wake order, then the rest
//! round-robin after the last bus grantee. Memory effects are applied at
//! issue; bus grants follow issue order, so functional order and bus order
//! agree.

mod bus;
mod report;

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use bus::{BusArbiter, BusError, Grant};
pub use report::{AccessRecord, ChargedEvent, Dispatch, ProcessorState, StepReport, Transition};

use crate::config::{Backend, SimConfig, Violation};
use crate::energy::{EnergyEventKind, EnergyLedger};
use crate::memhier::{AccessFault, AccessResult, Hierarchy, Outcome};
use crate::sync::{Abort, EnterOutcome, LineBuffer, SyncBackend, SyncError, SyncPort};
use crate::workloads::{AbstractOp, ProgramCursor, ThreadProgram};
use crate::{Addr, CoreId, Cycle, RegionId};

#[derive(Debug, Clone)]
pub struct Processor {
    pub id: CoreId,
    pub state: ProcessorState,
    pub cursor: ProgramCursor,
    pub op_completion_cycle: Cycle,
    pub blocked_on: Option<RegionId>,
    /// Abort backoff expiry while Waiting.
    pub wake_at: Option<Cycle>,
    /// Region the core is currently inside.
    pub region: Option<RegionId>,
    /// Commit write-back transfers still to be issued.
    pub pending_flush: u32,
    pub finished_at: Option<Cycle>,
}

impl Processor {
    fn new(id: CoreId) -> Self {
        Self {
            id,
            state: ProcessorState::Running,
            cursor: ProgramCursor::new(),
            op_completion_cycle: 0,
            blocked_on: None,
            wake_at: None,
            region: None,
            pending_flush: 0,
            finished_at: None,
        }
    }

    pub fn program_counter(&self) -> usize {
        self.cursor.position()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InitError {
    #[error("expected {expected} programs, got {got}")]
    ProgramCountMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {}", list(.0))]
    InvalidConfig(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("deadlock detected at cycle {cycle}: every unfinished core is blocked ({})", blocked(.waiting))]
    DeadlockDetected {
        cycle: Cycle,
        waiting: Vec<(CoreId, Option<RegionId>)>,
    },
    #[error("cycle limit of {limit} exceeded")]
    CycleLimitExceeded { limit: Cycle },
    #[error("core {core} faulted at cycle {cycle}: {fault}")]
    Fault {
        core: CoreId,
        cycle: Cycle,
        fault: AccessFault,
    },
    #[error("core {core} at cycle {cycle}: {error}")]
    Sync {
        core: CoreId,
        cycle: Cycle,
        error: SyncError,
    },
}

fn blocked(w: &[(CoreId, Option<RegionId>)]) -> String {
    w.iter()
        .map(|(c, r)| match r {
            Some(r) => format!("core {c} on {r}"),
            None => format!("core {c}"),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("core {0} does not exist")]
    NoSuchCore(CoreId),
    #[error("core {0} is not running")]
    NotRunning(CoreId),
    #[error("core {0} is not waiting")]
    NotWaiting(CoreId),
    #[error("blocking requires the semaphore backend and an existing region")]
    NoSemaphore,
    #[error("region {0} has a free permit; waiting would not block")]
    PermitAvailable(RegionId),
    #[error(transparent)]
    Sync(#[from] SyncError),
}

/// Lines written back by one committed transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub core: CoreId,
    pub cycle: Cycle,
    pub lines: Vec<(Addr, LineBuffer)>,
}

/// Invariant violation seen while auditing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFinding {
    pub cycle: Cycle,
    pub what: String,
}

#[derive(Debug, Clone, Default)]
struct Audit {
    findings: Vec<AuditFinding>,
    commits: Vec<CommitRecord>,
    last_grant: Option<Cycle>,
}

/// Memory operations on behalf of the sync backends and the dispatcher.
struct Port<'a> {
    hier: &'a mut Hierarchy,
    bus: &'a mut BusArbiter,
    ledger: &'a mut EnergyLedger,
    report: &'a mut StepReport,
    commits: Option<&'a mut Vec<CommitRecord>>,
    cycle: Cycle,
}

impl Port<'_> {
    fn charge(&mut self, core: CoreId, kind: EnergyEventKind, count: u64) {
        if count == 0 {
            return;
        }
        self.ledger.charge(kind, count);
        self.report.events.push(ChargedEvent {
            core: Some(core),
            kind,
            count,
        });
    }

    /// Charges an access and returns its retire cycle. With `use_bus` the
    /// transfer is arbitrated now; otherwise the caller schedules it.
    fn account(&mut self, core: CoreId, r: &AccessResult, use_bus: bool) -> Cycle {
        for kind in r.events.iter() {
            self.charge(core, kind, 1);
        }
        self.report.accesses.push(AccessRecord {
            core,
            paddr: r.paddr,
            kind: r.kind,
            d1_hit: r.d1.is_hit(),
            tlb_hit: r.tlb == Outcome::Hit,
            shared: r.region.is_shared(),
        });
        let start = self.cycle;
        if r.bus && use_bus {
            let g = self
                .bus
                .acquire(core, start)
                .expect("one request per core per cycle");
            self.report.bus_grants.push(g);
            (g.granted + r.latency).max(g.granted + self.bus.cycles_per_transfer())
        } else {
            start + r.latency.max(1)
        }
    }
}

impl SyncPort for Port<'_> {
    fn test_and_set(
        &mut self,
        core: CoreId,
        addr: Addr,
        cycle: Cycle,
    ) -> Result<(u8, Cycle), AccessFault> {
        debug_assert_eq!(cycle, self.cycle);
        let (prior, r) = self.hier.swap_byte(core, addr, 1)?;
        self.charge(core, EnergyEventKind::SpinProbe, 1);
        Ok((prior, self.account(core, &r, true)))
    }

    fn store_byte(
        &mut self,
        core: CoreId,
        addr: Addr,
        value: u8,
        cycle: Cycle,
    ) -> Result<Cycle, AccessFault> {
        debug_assert_eq!(cycle, self.cycle);
        let r = self.hier.store(core, addr, &[value])?;
        Ok(self.account(core, &r, true))
    }

    fn flush_line(
        &mut self,
        core: CoreId,
        line: Addr,
        buf: &LineBuffer,
    ) -> Result<(), AccessFault> {
        let r = self.hier.store_masked(core, line, &buf.data, &buf.mask)?;
        self.account(core, &r, false);
        if let Some(log) = self.commits.as_deref_mut() {
            match log.last_mut() {
                Some(rec) if rec.core == core && rec.cycle == self.cycle => {
                    rec.lines.push((line, buf.clone()))
                }
                _ => log.push(CommitRecord {
                    core,
                    cycle: self.cycle,
                    lines: alloc::vec![(line, buf.clone())],
                }),
            }
        }
        Ok(())
    }
}

/// Complete simulation state.
#[derive(Debug, Clone)]
pub struct System {
    cfg: SimConfig,
    clock: Cycle,
    programs: Vec<ThreadProgram>,
    processors: Vec<Processor>,
    bus: BusArbiter,
    hier: Hierarchy,
    backend: SyncBackend,
    ledger: EnergyLedger,
    ready_queue: VecDeque<CoreId>,
    report: StepReport,
    audit: Option<Audit>,
    stray_shared_writes: u64,
}

impl System {
    /// Builds a cold system. `regions` is the number of sync regions the
    /// programs use.
    pub fn new(
        cfg: SimConfig,
        programs: Vec<ThreadProgram>,
        regions: usize,
    ) -> Result<Self, InitError> {
        let violations = cfg.validate();
        if !violations.is_empty() {
            return Err(InitError::InvalidConfig(violations));
        }
        if programs.len() != cfg.num_cores {
            return Err(InitError::ProgramCountMismatch {
                expected: cfg.num_cores,
                got: programs.len(),
            });
        }
        let hier = Hierarchy::new(&cfg);
        let backend = SyncBackend::new(&cfg, hier.map(), regions);
        Ok(Self {
            clock: 0,
            processors: (0..cfg.num_cores).map(Processor::new).collect(),
            bus: BusArbiter::new(cfg.num_cores, cfg.bus_cycles_per_transfer),
            hier,
            backend,
            ledger: EnergyLedger::new(cfg.energy_coeff),
            ready_queue: VecDeque::new(),
            report: StepReport::default(),
            audit: None,
            stray_shared_writes: 0,
            programs,
            cfg,
        })
    }

    /// Like [`System::new`], sizing the regions from the highest region the
    /// programs name.
    pub fn with_programs(cfg: SimConfig, programs: Vec<ThreadProgram>) -> Result<Self, InitError> {
        let regions = programs
            .iter()
            .filter_map(ThreadProgram::max_region)
            .max()
            .map_or(0, |r| r.0 + 1);
        Self::new(cfg, programs, regions)
    }

    /// Turns on per-cycle invariant checks and the commit log.
    pub fn enable_audit(&mut self) {
        self.audit = Some(Audit::default());
    }

    pub fn audit_findings(&self) -> &[AuditFinding] {
        self.audit.as_ref().map_or(&[], |a| &a.findings)
    }

    /// Committed transactions in commit order (audit mode only).
    pub fn commit_log(&self) -> &[CommitRecord] {
        self.audit.as_ref().map_or(&[], |a| &a.commits)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn clock(&self) -> Cycle {
        self.clock
    }

    pub fn processors(&self) -> &[Processor] {
        &self.processors
    }

    pub fn processor(&self, core: CoreId) -> &Processor {
        &self.processors[core]
    }

    pub fn bus(&self) -> &BusArbiter {
        &self.bus
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hier
    }

    pub fn hierarchy_mut(&mut self) -> &mut Hierarchy {
        &mut self.hier
    }

    pub fn backend(&self) -> &SyncBackend {
        &self.backend
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.ledger
    }

    pub fn ready_queue(&self) -> impl Iterator<Item = CoreId> + '_ {
        self.ready_queue.iter().copied()
    }

    pub fn last_report(&self) -> &StepReport {
        &self.report
    }

    /// Shared-memory stores issued outside any region.
    pub fn stray_shared_writes(&self) -> u64 {
        self.stray_shared_writes
    }

    pub fn all_finished(&self) -> bool {
        self.processors
            .iter()
            .all(|p| p.state == ProcessorState::Finished)
    }

    /// Completion time of the last core to finish.
    pub fn cycles(&self) -> Cycle {
        self.processors
            .iter()
            .filter_map(|p| p.finished_at)
            .max()
            .unwrap_or(0)
    }

    fn transition(&mut self, core: CoreId, to: ProcessorState) {
        let from = self.processors[core].state;
        debug_assert!(from.may_become(to), "{from:?} -> {to:?}");
        self.processors[core].state = to;
        self.report.transitions.push(Transition { core, from, to });
    }

    fn park(&mut self, core: CoreId, region: RegionId, wake_at: Option<Cycle>) {
        self.transition(core, ProcessorState::Waiting);
        let p = &mut self.processors[core];
        p.blocked_on = Some(region);
        p.wake_at = wake_at;
    }

    /// Puts a running core on the waiting queue of `region`'s semaphore.
    pub fn block_processor(&mut self, core: CoreId, region: RegionId) -> Result<(), EngineError> {
        let state = self
            .processors
            .get(core)
            .ok_or(EngineError::NoSuchCore(core))?
            .state;
        if state != ProcessorState::Running {
            return Err(EngineError::NotRunning(core));
        }
        let sem = self
            .backend
            .semaphore_mut(region)
            .ok_or(EngineError::NoSemaphore)?;
        if sem.count() > 0 {
            return Err(EngineError::PermitAvailable(region));
        }
        sem.wait(core).map_err(SyncError::from)?;
        self.park(core, region, None);
        Ok(())
    }

    /// Moves a waiting core to the ready queue; it runs from the next cycle.
    pub fn wake_processor(&mut self, core: CoreId) -> Result<(), EngineError> {
        let state = self
            .processors
            .get(core)
            .ok_or(EngineError::NoSuchCore(core))?
            .state;
        if state != ProcessorState::Waiting {
            return Err(EngineError::NotWaiting(core));
        }
        self.make_ready(core);
        self.ledger.charge(EnergyEventKind::WakeupEvent, 1);
        self.report.events.push(ChargedEvent {
            core: Some(core),
            kind: EnergyEventKind::WakeupEvent,
            count: 1,
        });
        Ok(())
    }

    fn make_ready(&mut self, core: CoreId) {
        self.transition(core, ProcessorState::Ready);
        let p = &mut self.processors[core];
        p.blocked_on = None;
        p.wake_at = None;
        self.ready_queue.push_back(core);
    }

    /// Every unfinished core waits, no timer is pending and no semaphore
    /// could admit anyone.
    pub fn detect_deadlock(&self) -> bool {
        let mut unfinished = self
            .processors
            .iter()
            .filter(|p| p.state != ProcessorState::Finished)
            .peekable();
        unfinished.peek().is_some()
            && unfinished.all(|p| p.state == ProcessorState::Waiting && p.wake_at.is_none())
            && !self.backend.has_surplus()
    }

    fn port(&mut self, cycle: Cycle) -> (Port<'_>, &mut SyncBackend) {
        (
            Port {
                hier: &mut self.hier,
                bus: &mut self.bus,
                ledger: &mut self.ledger,
                report: &mut self.report,
                commits: self.audit.as_mut().map(|a| &mut a.commits),
                cycle,
            },
            &mut self.backend,
        )
    }

    fn abort(&mut self, a: Abort, now: Cycle) {
        let p = &self.processors[a.core];
        let region = p.region.expect("aborted core is inside a region");
        let wake = now.max(p.op_completion_cycle) + a.backoff;
        self.ledger.charge(EnergyEventKind::TxAbortWaste, a.wasted);
        if a.wasted > 0 {
            self.report.events.push(ChargedEvent {
                core: Some(a.core),
                kind: EnergyEventKind::TxAbortWaste,
                count: a.wasted,
            });
        }
        let p = &mut self.processors[a.core];
        p.cursor.rewind_region();
        p.region = None;
        self.park(a.core, region, Some(wake));
    }

    fn issue(&mut self, core: CoreId, now: Cycle) -> Result<(), RunError> {
        let fault = |fault| RunError::Fault {
            core,
            cycle: now,
            fault,
        };
        let sync = |error| RunError::Sync {
            core,
            cycle: now,
            error,
        };

        if self.processors[core].pending_flush > 0 {
            let g = self
                .bus
                .acquire(core, now)
                .expect("one request per core per cycle");
            self.report.bus_grants.push(g);
            let p = &mut self.processors[core];
            p.pending_flush -= 1;
            p.op_completion_cycle = g.granted + self.cfg.bus_cycles_per_transfer;
            return Ok(());
        }

        let op = self.processors[core].cursor.next_op(&self.programs[core]);
        self.report.dispatched.push(Dispatch { core, op });
        let tx_active = self.backend.tx().is_some_and(|m| m.is_active(core));
        let mut retire = true;
        let mut read = None;
        let done;
        match op {
            AbstractOp::End => {
                self.transition(core, ProcessorState::Finished);
                self.processors[core].finished_at = Some(now);
                return Ok(());
            }
            AbstractOp::Compute { cycles } => {
                self.ledger.charge(EnergyEventKind::ComputeActive, cycles);
                if cycles > 0 {
                    self.report.events.push(ChargedEvent {
                        core: Some(core),
                        kind: EnergyEventKind::ComputeActive,
                        count: cycles,
                    });
                }
                done = now + cycles.max(1);
            }
            AbstractOp::Read { vaddr, size } => {
                let (mut data, r) = self.hier.load(core, vaddr, size as usize).map_err(fault)?;
                if tx_active && r.region.is_shared() {
                    let m = self.backend.tx_mut().expect("tx backend");
                    data = m.read(core, vaddr, &data).map_err(|e| sync(e.into()))?;
                }
                let (mut port, _) = self.port(now);
                done = port.account(core, &r, true);
                read = Some(data);
            }
            AbstractOp::Write { vaddr, data } => {
                let region = self
                    .hier
                    .check_access(core, vaddr, data.len())
                    .map_err(fault)?;
                if tx_active && region.is_shared() {
                    let m = self.backend.tx_mut().expect("tx backend");
                    m.write(core, vaddr, &data).map_err(|e| sync(e.into()))?;
                    done = now + self.cfg.lat.d1_hit;
                } else {
                    if region.is_shared() && self.processors[core].region.is_none() {
                        self.stray_shared_writes += 1;
                    }
                    let r = self.hier.store(core, vaddr, &data).map_err(fault)?;
                    let (mut port, _) = self.port(now);
                    done = port.account(core, &r, true);
                }
            }
            AbstractOp::Enter { region } => {
                let (mut port, backend) = self.port(now);
                let entry = backend
                    .region_enter(core, region, now, &mut port)
                    .map_err(sync)?;
                done = entry.ready_at;
                match entry.outcome {
                    EnterOutcome::Entered | EnterOutcome::TxStarted => {
                        self.processors[core].region = Some(region);
                    }
                    EnterOutcome::SpinRetry { .. } => retire = false,
                    EnterOutcome::Blocked => {
                        let p = &mut self.processors[core];
                        p.region = Some(region);
                        p.cursor.retire(&self.programs[core], None);
                        p.op_completion_cycle = now;
                        self.park(core, region, None);
                        return Ok(());
                    }
                }
            }
            AbstractOp::Exit { region } => {
                let (mut port, backend) = self.port(now);
                let fx = backend
                    .region_exit(core, region, now, &mut port)
                    .map_err(sync)?;
                if let Some(a) = fx.self_abort {
                    self.abort(a, now);
                    return Ok(());
                }
                done = fx.ready_at;
                self.processors[core].region = None;
                self.processors[core].pending_flush = fx.flushed_lines as u32;
                for v in fx.victims {
                    self.abort(v, now);
                }
                if let Some(w) = fx.woken {
                    self.wake_processor(w).expect("woken core was waiting");
                }
            }
        }
        let p = &mut self.processors[core];
        if retire {
            p.cursor.retire(&self.programs[core], read);
        }
        p.op_completion_cycle = done;
        Ok(())
    }

    /// Advances the clock by one cycle.
    pub fn step(&mut self) -> Result<&StepReport, RunError> {
        let now = self.clock;
        self.report.reset(now);

        let promoted: Vec<CoreId> = self.ready_queue.drain(..).collect();
        for &c in &promoted {
            self.transition(c, ProcessorState::Running);
            let p = &mut self.processors[c];
            p.op_completion_cycle = p.op_completion_cycle.max(now);
        }
        for c in 0..self.processors.len() {
            let p = &self.processors[c];
            if p.state == ProcessorState::Waiting && p.wake_at.is_some_and(|t| t <= now) {
                self.make_ready(c);
            }
        }

        let mut order = promoted;
        let rest: Vec<CoreId> = self.bus.rotation().filter(|c| !order.contains(c)).collect();
        order.extend(rest);
        for c in order {
            let p = &self.processors[c];
            if p.state == ProcessorState::Running && p.op_completion_cycle <= now {
                self.issue(c, now)?;
            }
        }

        let waiting = self
            .processors
            .iter()
            .filter(|p| p.state == ProcessorState::Waiting)
            .count() as u64;
        if waiting > 0 {
            self.ledger.charge(EnergyEventKind::BlockedIdle, waiting);
            self.report.events.push(ChargedEvent {
                core: None,
                kind: EnergyEventKind::BlockedIdle,
                count: waiting,
            });
        }

        if self.audit.is_some() {
            self.run_audit(now);
        }
        self.clock += 1;
        Ok(&self.report)
    }

    fn run_audit(&mut self, now: Cycle) {
        let mut found: Vec<String> = Vec::new();
        if let Err(e) = self.backend.audit(&self.hier) {
            found.push(e.into());
        }
        for p in &self.processors {
            if p.state == ProcessorState::Waiting && p.blocked_on.is_none() {
                found.push(format!("core {} waits without a region", p.id));
            }
        }
        let cpt = self.cfg.bus_cycles_per_transfer;
        let bound = self.cfg.num_cores as u64 * cpt;
        let audit = self.audit.as_mut().expect("audit on");
        for g in &self.report.bus_grants {
            if g.granted - g.requested >= bound.max(1) {
                found.push(format!(
                    "core {} waited {} cycles for the bus",
                    g.core,
                    g.granted - g.requested
                ));
            }
            if audit.last_grant.is_some_and(|l| g.granted < l + cpt) {
                found.push(format!("overlapping bus transfers at cycle {}", g.granted));
            }
            audit.last_grant = Some(g.granted);
        }
        audit.findings.extend(
            found
                .into_iter()
                .map(|what| AuditFinding { cycle: now, what }),
        );
    }

    /// Earliest cycle at which anything can happen again.
    fn next_event(&self) -> Option<Cycle> {
        if !self.ready_queue.is_empty() {
            return Some(self.clock);
        }
        self.processors
            .iter()
            .filter_map(|p| match p.state {
                ProcessorState::Running => Some(p.op_completion_cycle),
                ProcessorState::Waiting => p.wake_at,
                _ => None,
            })
            .min()
    }

    fn run_loop(
        &mut self,
        mut observer: Option<&mut dyn FnMut(&StepReport)>,
    ) -> Result<Cycle, RunError> {
        loop {
            if self.all_finished() {
                return Ok(self.cycles());
            }
            if self.clock >= self.cfg.max_cycles {
                return Err(RunError::CycleLimitExceeded {
                    limit: self.cfg.max_cycles,
                });
            }
            if self.detect_deadlock() {
                return Err(RunError::DeadlockDetected {
                    cycle: self.clock,
                    waiting: self
                        .processors
                        .iter()
                        .filter(|p| p.state == ProcessorState::Waiting)
                        .map(|p| (p.id, p.blocked_on))
                        .collect(),
                });
            }
            self.step()?;
            match observer.as_deref_mut() {
                Some(f) => f(&self.report),
                None => self.fast_forward(),
            }
        }
    }

    /// Skips cycles in which no core can act, charging the idle cost the
    /// skipped steps would have charged.
    fn fast_forward(&mut self) {
        let Some(next) = self.next_event() else {
            return;
        };
        let target = next.min(self.cfg.max_cycles);
        if target <= self.clock {
            return;
        }
        let waiting = self
            .processors
            .iter()
            .filter(|p| p.state == ProcessorState::Waiting)
            .count() as u64;
        self.ledger.charge(
            EnergyEventKind::BlockedIdle,
            waiting * (target - self.clock),
        );
        self.clock = target;
    }

    /// Runs to completion. Returns the cycle count.
    pub fn run(&mut self) -> Result<Cycle, RunError> {
        self.run_loop(None)
    }

    /// Runs to completion, handing every cycle's report to `observer`.
    pub fn run_observed(
        &mut self,
        mut observer: impl FnMut(&StepReport),
    ) -> Result<Cycle, RunError> {
        self.run_loop(Some(&mut observer))
    }

    /// Backend of the configured kind (convenience for reports).
    pub fn backend_kind(&self) -> Backend {
        self.backend.kind()
    }
}

#[cfg(test)]
mod tests;
