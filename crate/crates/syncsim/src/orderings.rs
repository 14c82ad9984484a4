//! Qualitative comparisons between backends over per-cell means.

use std::collections::BTreeMap;

use syncsim_core::config::{Backend, Benchmark};
use syncsim_core::stats::CellMeans;

/// Relative margin required for a strict ordering.
pub const STRICT_MARGIN: f64 = 0.05;
/// Largest relative gap at which two energies count as comparable.
pub const COMPARABLE_GAP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub benchmark: Benchmark,
    pub claim: &'static str,
    pub ok: bool,
    pub detail: String,
}

/// `a` exceeds `b` by at least the strict margin, relative to `b`.
pub fn clearly_above(a: f64, b: f64) -> bool {
    a > b && a - b >= STRICT_MARGIN * b
}

/// `a` is below `b` by at least the strict margin, relative to `b`.
pub fn clearly_below(a: f64, b: f64) -> bool {
    a < b && b - a >= STRICT_MARGIN * b
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b).abs() / b
    }
}

/// Energy and miss-rate orderings for every benchmark present in `means`.
pub fn check_orderings(means: &BTreeMap<(Benchmark, Backend), CellMeans>) -> Vec<OrderingCheck> {
    let mut out = Vec::new();
    for bench in Benchmark::ALL {
        let get = |b| means.get(&(bench, b));
        let (Some(lock), Some(tx), Some(sem)) = (
            get(Backend::Lock),
            get(Backend::Transaction),
            get(Backend::Semaphore),
        ) else {
            continue;
        };
        let (el, et, es) = (lock.energy_total, tx.energy_total, sem.energy_total);
        let (ml, mt, ms) = (lock.d1_miss_rate, tx.d1_miss_rate, sem.d1_miss_rate);
        let mut push = |claim, ok, detail| {
            out.push(OrderingCheck {
                benchmark: bench,
                claim,
                ok,
                detail,
            })
        };
        push(
            "energy: lock > transaction by 5%",
            clearly_above(el, et),
            format!("{el:.1} vs {et:.1}"),
        );
        let gap = relative_gap(es, et);
        push(
            "energy: semaphore within 25% of transaction",
            gap <= COMPARABLE_GAP,
            format!("gap {:.1}%", gap * 100.0),
        );
        push(
            "energy: lock > semaphore by 5%",
            clearly_above(el, es),
            format!("{el:.1} vs {es:.1}"),
        );
        push(
            "miss rate: semaphore <= transaction <= lock",
            ms <= mt && mt <= ml,
            format!("{ms:.4} / {mt:.4} / {ml:.4}"),
        );
        push(
            "miss rate: semaphore below lock by 5%",
            clearly_below(ms, ml),
            format!("{ms:.4} vs {ml:.4}"),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins() {
        assert!(clearly_above(105.0, 100.0));
        assert!(!clearly_above(104.9, 100.0));
        assert!(!clearly_above(100.0, 100.0));
        assert!(clearly_below(95.0, 100.0));
        assert!(!clearly_below(95.1, 100.0));
        assert_eq!(relative_gap(125.0, 100.0), 0.25);
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
    }

    #[test]
    fn all_checks_for_complete_benchmark() {
        let mut m = BTreeMap::new();
        let cell = |e, r| CellMeans {
            runs: 1,
            cycles: 1.0,
            energy_total: e,
            d1_miss_rate: r,
        };
        m.insert((Benchmark::Fft, Backend::Lock), cell(200.0, 0.5));
        m.insert((Benchmark::Fft, Backend::Transaction), cell(100.0, 0.3));
        m.insert((Benchmark::Fft, Backend::Semaphore), cell(110.0, 0.2));
        let checks = check_orderings(&m);
        assert_eq!(checks.len(), 5);
        assert!(checks.iter().all(|c| c.ok && c.benchmark == Benchmark::Fft));
        m.insert((Benchmark::Fft, Backend::Semaphore), cell(130.0, 0.4));
        let failed: Vec<_> = check_orderings(&m)
            .into_iter()
            .filter(|c| !c.ok)
            .map(|c| c.claim)
            .collect();
        assert_eq!(
            failed,
            [
                "energy: semaphore within 25% of transaction",
                "miss rate: semaphore <= transaction <= lock"
            ]
        );
    }
}
