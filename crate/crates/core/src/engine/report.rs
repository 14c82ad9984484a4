use alloc::vec::Vec;

use super::bus::Grant;
use crate::energy::EnergyEventKind;
use crate::memhier::AccessKind;
use crate::workloads::AbstractOp;
use crate::{Addr, CoreId, Cycle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProcessorState {
    Running,
    Ready,
    Waiting,
    Finished,
}

impl ProcessorState {
    /// Transitions the engine may perform.
    pub fn may_become(self, next: ProcessorState) -> bool {
        use ProcessorState::*;
        matches!(
            (self, next),
            (Running, Running | Waiting | Finished) | (Waiting, Ready) | (Ready, Running)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transition {
    pub core: CoreId,
    pub from: ProcessorState,
    pub to: ProcessorState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChargedEvent {
    /// `None` for system-wide charges.
    pub core: Option<CoreId>,
    pub kind: EnergyEventKind,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AccessRecord {
    pub core: CoreId,
    pub paddr: Addr,
    pub kind: AccessKind,
    pub d1_hit: bool,
    pub tlb_hit: bool,
    pub shared: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    pub core: CoreId,
    pub op: AbstractOp,
}

/// Everything that happened in one cycle.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StepReport {
    pub cycle: Cycle,
    pub transitions: Vec<Transition>,
    pub events: Vec<ChargedEvent>,
    pub accesses: Vec<AccessRecord>,
    pub bus_grants: Vec<Grant>,
    /// Operations issued this cycle, in issue order.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub dispatched: Vec<Dispatch>,
}

impl StepReport {
    pub(crate) fn reset(&mut self, cycle: Cycle) {
        self.cycle = cycle;
        self.transitions.clear();
        self.events.clear();
        self.accesses.clear();
        self.bus_grants.clear();
        self.dispatched.clear();
    }

    pub fn is_quiet(&self) -> bool {
        self.transitions.is_empty()
            && self.accesses.is_empty()
            && self.bus_grants.is_empty()
            && self.dispatched.is_empty()
    }
}
