//! Thread programs as streams of abstract operations.
//!
//! Straight-line parts are stored as plain ops. Data-dependent parts (a tree
//! walk, a counter increment, a barrier spin) are scripts: pure closures
//! that issue operations through a [`ScriptCx`]. A script is resumed by
//! replaying it from its start against the log of operations that already
//! retired, so each call yields exactly one new operation. Replaying from
//! the segment start is also how an aborted region body re-executes.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::memhier::Data;
use crate::{Addr, RegionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstractOp {
    Read { vaddr: Addr, size: u8 },
    Write { vaddr: Addr, data: Data },
    Compute { cycles: u64 },
    Enter { region: RegionId },
    Exit { region: RegionId },
    End,
}

impl fmt::Display for AbstractOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbstractOp::Read { vaddr, size } => write!(f, "read {vaddr:#x} {size}"),
            AbstractOp::Write { vaddr, data } => write!(f, "write {vaddr:#x} {data:?}"),
            AbstractOp::Compute { cycles } => write!(f, "compute {cycles}"),
            AbstractOp::Enter { region } => write!(f, "enter {region}"),
            AbstractOp::Exit { region } => write!(f, "exit {region}"),
            AbstractOp::End => f.write_str("end"),
        }
    }
}

/// Marker returned through `?` when a script has issued its next operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Yield;

pub type Step<T> = Result<T, Yield>;

pub type ScriptFn = Arc<dyn Fn(&mut ScriptCx<'_>) -> Step<()> + Send + Sync>;

/// Operation issuer handed to scripts.
pub struct ScriptCx<'a> {
    log: &'a [(AbstractOp, Option<Data>)],
    pos: usize,
    issued: Option<AbstractOp>,
    restart: bool,
}

impl ScriptCx<'_> {
    fn issue(&mut self, op: AbstractOp) -> Step<Option<Data>> {
        if let Some(&(logged, result)) = self.log.get(self.pos) {
            assert_eq!(logged, op, "script is not deterministic");
            self.pos += 1;
            Ok(result)
        } else {
            self.issued = Some(op);
            Err(Yield)
        }
    }

    pub fn read(&mut self, vaddr: Addr, size: usize) -> Step<Data> {
        let r = self.issue(AbstractOp::Read {
            vaddr,
            size: size as u8,
        })?;
        Ok(r.expect("read retired without data"))
    }

    pub fn read_u64(&mut self, vaddr: Addr) -> Step<u64> {
        Ok(self.read(vaddr, 8)?.as_u64())
    }

    pub fn write(&mut self, vaddr: Addr, data: Data) -> Step<()> {
        self.issue(AbstractOp::Write { vaddr, data }).map(|_| ())
    }

    pub fn write_u64(&mut self, vaddr: Addr, v: u64) -> Step<()> {
        self.write(vaddr, Data::from_u64(v))
    }

    pub fn compute(&mut self, cycles: u64) -> Step<()> {
        self.issue(AbstractOp::Compute { cycles }).map(|_| ())
    }

    /// Ends this pass and runs the script again from the top with an empty
    /// log. Keeps long polling loops from replaying their whole history.
    pub fn repeat(&mut self) -> Step<()> {
        self.restart = true;
        Ok(())
    }
}

#[derive(Clone)]
pub enum Segment {
    Op(AbstractOp),
    Script { label: String, body: ScriptFn },
}

impl fmt::Debug for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Segment::Op(op) => write!(f, "{op}"),
            Segment::Script { label, .. } => write!(f, "script {label}"),
        }
    }
}

/// Immutable per-thread program; share it freely between simulations.
#[derive(Clone, Debug, Default)]
pub struct ThreadProgram {
    segments: Vec<Segment>,
}

impl ThreadProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, op: AbstractOp) -> &mut Self {
        self.segments.push(Segment::Op(op));
        self
    }

    pub fn enter(&mut self, region: RegionId) -> &mut Self {
        self.op(AbstractOp::Enter { region })
    }

    pub fn exit(&mut self, region: RegionId) -> &mut Self {
        self.op(AbstractOp::Exit { region })
    }

    pub fn script<F>(&mut self, label: impl Into<String>, body: F) -> &mut Self
    where
        F: Fn(&mut ScriptCx<'_>) -> Step<()> + Send + Sync + 'static,
    {
        self.segments.push(Segment::Script {
            label: label.into(),
            body: Arc::new(body),
        });
        self
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Highest region named by an enter/exit, if any.
    pub fn max_region(&self) -> Option<RegionId> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Op(AbstractOp::Enter { region } | AbstractOp::Exit { region }) => {
                    Some(*region)
                }
                _ => None,
            })
            .max()
    }
}

/// Execution position of one processor inside its program.
#[derive(Debug, Clone, Default)]
pub struct ProgramCursor {
    seg: usize,
    log: Vec<(AbstractOp, Option<Data>)>,
    pending: Option<AbstractOp>,
    region_mark: Option<usize>,
}

impl ProgramCursor {
    pub fn new() -> Self {
        Self::default()
    }

    /// Segment index; never exceeds the program length.
    pub fn position(&self) -> usize {
        self.seg
    }

    /// The next operation to execute. Idempotent until [`Self::retire`].
    pub fn next_op(&mut self, prog: &ThreadProgram) -> AbstractOp {
        if let Some(op) = self.pending {
            return op;
        }
        loop {
            let Some(seg) = prog.segments.get(self.seg) else {
                self.pending = Some(AbstractOp::End);
                return AbstractOp::End;
            };
            match seg {
                Segment::Op(op) => {
                    self.pending = Some(*op);
                    return *op;
                }
                Segment::Script { body, .. } => {
                    let mut cx = ScriptCx {
                        log: &self.log,
                        pos: 0,
                        issued: None,
                        restart: false,
                    };
                    match body(&mut cx) {
                        Err(Yield) => {
                            let op = cx.issued.expect("script yielded without an op");
                            self.pending = Some(op);
                            return op;
                        }
                        Ok(()) if cx.restart => {
                            assert!(
                                !self.log.is_empty(),
                                "script repeated without issuing an op"
                            );
                            self.log.clear();
                        }
                        Ok(()) => {
                            self.seg += 1;
                            self.log.clear();
                        }
                    }
                }
            }
        }
    }

    /// Marks the pending operation done. `read` carries a load's data.
    pub fn retire(&mut self, prog: &ThreadProgram, read: Option<Data>) {
        let op = self.pending.take().expect("retire without pending op");
        match prog.segments.get(self.seg) {
            None => {}
            Some(Segment::Op(o)) => {
                if let AbstractOp::Enter { .. } = o {
                    self.region_mark = Some(self.seg);
                } else if let AbstractOp::Exit { .. } = o {
                    self.region_mark = None;
                }
                self.seg += 1;
            }
            Some(Segment::Script { .. }) => self.log.push((op, read)),
        }
    }

    /// Rolls back to the enter of the innermost open region.
    pub fn rewind_region(&mut self) {
        let mark = self.region_mark.take().expect("rewind outside a region");
        self.seg = mark;
        self.log.clear();
        self.pending = None;
    }

    pub fn in_region(&self) -> bool {
        self.region_mark.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn counter_prog() -> ThreadProgram {
        let mut p = ThreadProgram::new();
        p.enter(RegionId(0))
            .script("incr", |cx| {
                let v = cx.read_u64(0x100)?;
                cx.compute(4)?;
                cx.write_u64(0x100, v + 1)
            })
            .exit(RegionId(0));
        p
    }

    #[test]
    fn script_yields_one_op_at_a_time() {
        let p = counter_prog();
        let mut c = ProgramCursor::new();
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Enter {
                region: RegionId(0)
            }
        );
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Enter {
                region: RegionId(0)
            }
        );
        c.retire(&p, None);
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Read {
                vaddr: 0x100,
                size: 8
            }
        );
        c.retire(&p, Some(Data::from_u64(41)));
        assert_eq!(c.next_op(&p), AbstractOp::Compute { cycles: 4 });
        c.retire(&p, None);
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Write {
                vaddr: 0x100,
                data: Data::from_u64(42)
            }
        );
        c.retire(&p, None);
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Exit {
                region: RegionId(0)
            }
        );
        c.retire(&p, None);
        assert_eq!(c.next_op(&p), AbstractOp::End);
        assert_eq!(c.position(), p.len());
    }

    #[test]
    fn rewind_replays_region_with_fresh_reads() {
        let p = counter_prog();
        let mut c = ProgramCursor::new();
        c.next_op(&p);
        c.retire(&p, None);
        c.next_op(&p);
        c.retire(&p, Some(Data::from_u64(1)));
        c.rewind_region();
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Enter {
                region: RegionId(0)
            }
        );
        c.retire(&p, None);
        c.next_op(&p);
        c.retire(&p, Some(Data::from_u64(7)));
        c.next_op(&p);
        c.retire(&p, None);
        assert_eq!(
            c.next_op(&p),
            AbstractOp::Write {
                vaddr: 0x100,
                data: Data::from_u64(8)
            }
        );
    }

    #[test]
    fn data_dependent_loop() {
        let mut p = ThreadProgram::new();
        p.script("spin", |cx| {
            while cx.read_u64(0x40)? != 3 {
                cx.compute(2)?;
            }
            Ok(())
        });
        let mut c = ProgramCursor::new();
        let mut ops = vec![];
        for v in [0u64, 1, 3] {
            ops.push(c.next_op(&p));
            c.retire(&p, Some(Data::from_u64(v)));
            if v != 3 {
                ops.push(c.next_op(&p));
                c.retire(&p, None);
            }
        }
        assert_eq!(ops.len(), 5);
        assert_eq!(c.next_op(&p), AbstractOp::End);
    }

    #[test]
    fn repeat_restarts_with_empty_log() {
        let mut p = ThreadProgram::new();
        p.script("poll", |cx| {
            if cx.read_u64(0x40)? == 1 {
                return Ok(());
            }
            cx.compute(4)?;
            cx.repeat()
        });
        let mut c = ProgramCursor::new();
        for _ in 0..3 {
            assert_eq!(
                c.next_op(&p),
                AbstractOp::Read {
                    vaddr: 0x40,
                    size: 8
                }
            );
            c.retire(&p, Some(Data::from_u64(0)));
            assert_eq!(c.next_op(&p), AbstractOp::Compute { cycles: 4 });
            c.retire(&p, None);
            assert!(c.log.is_empty() || c.log.len() == 2);
        }
        c.next_op(&p);
        c.retire(&p, Some(Data::from_u64(1)));
        assert_eq!(c.next_op(&p), AbstractOp::End);
    }

    #[test]
    fn max_region_scans_ops() {
        let mut p = counter_prog();
        assert_eq!(p.max_region(), Some(RegionId(0)));
        p.enter(RegionId(5)).exit(RegionId(5));
        assert_eq!(p.max_region(), Some(RegionId(5)));
        assert_eq!(ThreadProgram::new().max_region(), None);
    }
}
