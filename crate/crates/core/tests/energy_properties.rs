use proptest::prelude::*;
use syncsim_core::energy::EnergyCoefficients;
use syncsim_core::{EnergyEventKind, EnergyLedger};

fn coefficients() -> impl Strategy<Value = EnergyCoefficients> {
    prop::array::uniform12(0u32..1000).prop_map(|raw| {
        let mut c = EnergyCoefficients::default();
        for (k, v) in EnergyEventKind::ALL.into_iter().zip(raw) {
            c.set(k, f64::from(v) / 8.0);
        }
        c
    })
}

fn charges() -> impl Strategy<Value = Vec<(usize, u64)>> {
    prop::collection::vec((0..EnergyEventKind::COUNT, 0u64..50), 0..200)
}

proptest! {
    #[test]
    fn total_is_counts_times_coefficients(coeff in coefficients(), list in charges()) {
        let mut ledger = EnergyLedger::new(coeff);
        let mut counts = [0u64; EnergyEventKind::COUNT];
        let mut before = 0.0;
        for &(k, n) in &list {
            ledger.charge(EnergyEventKind::ALL[k], n);
            counts[k] += n;
            prop_assert!(ledger.total() >= before);
            before = ledger.total();
        }
        let expected: f64 = EnergyEventKind::ALL
            .iter()
            .map(|&k| counts[k.index()] as f64 * coeff.get(k))
            .sum();
        prop_assert_eq!(ledger.total(), expected);
    }

    #[test]
    fn charge_order_does_not_matter(coeff in coefficients(), list in charges(), rot in 0usize..200) {
        let mut forward = EnergyLedger::new(coeff);
        let mut shuffled = EnergyLedger::new(coeff);
        for &(k, n) in &list {
            forward.charge(EnergyEventKind::ALL[k], n);
        }
        let mut other = list.clone();
        other.reverse();
        if !other.is_empty() {
            let r = rot % other.len();
            other.rotate_left(r);
        }
        for &(k, n) in &other {
            shuffled.charge(EnergyEventKind::ALL[k], n);
        }
        prop_assert_eq!(forward.total(), shuffled.total());
    }

    #[test]
    fn breakdown_shares_sum_to_one(coeff in coefficients(), list in charges()) {
        let mut ledger = EnergyLedger::new(coeff);
        for &(k, n) in &list {
            ledger.charge(EnergyEventKind::ALL[k], n);
        }
        let sum: f64 = ledger.breakdown().iter().map(|e| e.share).sum();
        if ledger.total() == 0.0 {
            prop_assert_eq!(sum, 0.0);
        } else {
            prop_assert!((sum - 1.0).abs() <= 1e-12, "shares sum to {}", sum);
        }
    }
}
