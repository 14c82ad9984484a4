//! Additive per-event energy accounting.
//!
//! Every architectural event charges `count × coefficient` units. Counts are
//! integers; the total is always recomputed from the counts in a fixed kind
//! order, so the order in which charges arrive never changes the result.

use core::fmt;
use core::str::FromStr;

/// Closed set of chargeable events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EnergyEventKind {
    D1Hit,
    D1MissRefill,
    TlbHit,
    TlbMissWalk,
    PrivateMemAccess,
    SharedMemAccess,
    BusTransfer,
    SpinProbe,
    TxAbortWaste,
    BlockedIdle,
    WakeupEvent,
    ComputeActive,
}

impl EnergyEventKind {
    pub const COUNT: usize = 12;

    pub const ALL: [EnergyEventKind; Self::COUNT] = [
        Self::D1Hit,
        Self::D1MissRefill,
        Self::TlbHit,
        Self::TlbMissWalk,
        Self::PrivateMemAccess,
        Self::SharedMemAccess,
        Self::BusTransfer,
        Self::SpinProbe,
        Self::TxAbortWaste,
        Self::BlockedIdle,
        Self::WakeupEvent,
        Self::ComputeActive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Snake-case key used in config files and CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            Self::D1Hit => "d1_hit",
            Self::D1MissRefill => "d1_miss_refill",
            Self::TlbHit => "tlb_hit",
            Self::TlbMissWalk => "tlb_miss_walk",
            Self::PrivateMemAccess => "private_mem_access",
            Self::SharedMemAccess => "shared_mem_access",
            Self::BusTransfer => "bus_transfer",
            Self::SpinProbe => "spin_probe",
            Self::TxAbortWaste => "tx_abort_waste",
            Self::BlockedIdle => "blocked_idle",
            Self::WakeupEvent => "wakeup_event",
            Self::ComputeActive => "compute_active",
        }
    }
}

impl fmt::Display for EnergyEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnergyEventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.iter().copied().find(|k| k.name() == s).ok_or(())
    }
}

/// Energy units charged per event, indexed by [`EnergyEventKind`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCoefficients([f64; EnergyEventKind::COUNT]);

impl Default for EnergyCoefficients {
    fn default() -> Self {
        use EnergyEventKind::*;
        let mut c = [0.0; EnergyEventKind::COUNT];
        c[D1Hit.index()] = 1.0;
        c[D1MissRefill.index()] = 5.0;
        c[TlbHit.index()] = 0.5;
        c[TlbMissWalk.index()] = 10.0;
        c[PrivateMemAccess.index()] = 5.0;
        c[SharedMemAccess.index()] = 20.0;
        c[BusTransfer.index()] = 3.0;
        c[SpinProbe.index()] = 2.0;
        c[TxAbortWaste.index()] = 1.0;
        c[BlockedIdle.index()] = 0.1;
        c[WakeupEvent.index()] = 2.0;
        c[ComputeActive.index()] = 0.5;
        Self(c)
    }
}

impl EnergyCoefficients {
    pub fn get(&self, kind: EnergyEventKind) -> f64 {
        self.0[kind.index()]
    }

    pub fn set(&mut self, kind: EnergyEventKind, value: f64) {
        self.0[kind.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (EnergyEventKind, f64)> + '_ {
        EnergyEventKind::ALL.iter().map(move |&k| (k, self.get(k)))
    }
}

/// One row of [`EnergyLedger::breakdown`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownEntry {
    pub kind: EnergyEventKind,
    pub count: u64,
    pub energy: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    counts: [u64; EnergyEventKind::COUNT],
    coefficients: EnergyCoefficients,
}

impl EnergyLedger {
    pub fn new(coefficients: EnergyCoefficients) -> Self {
        Self {
            counts: [0; EnergyEventKind::COUNT],
            coefficients,
        }
    }

    pub fn charge(&mut self, kind: EnergyEventKind, n: u64) {
        self.counts[kind.index()] += n;
    }

    pub fn count(&self, kind: EnergyEventKind) -> u64 {
        self.counts[kind.index()]
    }

    pub fn coefficients(&self) -> &EnergyCoefficients {
        &self.coefficients
    }

    pub fn energy_of(&self, kind: EnergyEventKind) -> f64 {
        self.count(kind) as f64 * self.coefficients.get(kind)
    }

    pub fn total(&self) -> f64 {
        EnergyEventKind::ALL
            .iter()
            .map(|&k| self.energy_of(k))
            .sum()
    }

    /// Per-kind count, energy and share of the total. An all-zero ledger
    /// reports every share as 0.
    pub fn breakdown(&self) -> [BreakdownEntry; EnergyEventKind::COUNT] {
        let total = self.total();
        EnergyEventKind::ALL.map(|kind| {
            let energy = self.energy_of(kind);
            BreakdownEntry {
                kind,
                count: self.count(kind),
                energy,
                share: if total > 0.0 { energy / total } else { 0.0 },
            }
        })
    }
}
