use proptest::prelude::*;
use syncsim::config_file::{load_config, serialize};
use syncsim::output::{csv_string, parse_csv};
use syncsim_core::config::{
    default_config, Backend, Benchmark, RetryLimit, SemInitPolicy, SimConfig,
};
use syncsim_core::{EnergyEventKind, RunResult};

fn config() -> impl Strategy<Value = SimConfig> {
    let machine = (
        prop::sample::select(vec![1usize, 2, 4]),
        6u32..14,
        prop::sample::select(vec![4u64, 16, 32]),
        1u64..5,
        prop::array::uniform5(1u64..60),
        prop::array::uniform12(0u32..4000),
    );
    let sync = (
        prop::sample::select(Backend::ALL.to_vec()),
        any::<bool>(),
        1u64..32,
        1u64..64,
        prop::option::of(0u32..20),
    );
    let work = (
        prop::sample::select(Benchmark::ALL.to_vec()),
        0u32..64,
        4u32..7,
        1u32..400,
        1u32..64,
        any::<u64>(),
        1000u64..100_000_000,
    );
    (machine, sync, work).prop_map(|(m, s, w)| {
        let mut c = default_config();
        c.num_cores = m.0;
        c.d1_size_bytes = 1 << m.1;
        c.tlb_entries = m.2;
        c.bus_cycles_per_transfer = m.3;
        c.lat.d1_hit = m.4[0];
        c.lat.d1_miss_penalty = m.4[1];
        c.lat.tlb_miss_walk = m.4[2];
        c.lat.private_access = m.4[3];
        c.lat.shared_access = m.4[4];
        for (k, v) in EnergyEventKind::ALL.into_iter().zip(m.5) {
            c.energy_coeff.set(k, f64::from(v) / 16.0);
        }
        c.backend = s.0;
        c.sem_init_policy = if s.1 {
            SemInitPolicy::One
        } else {
            SemInitPolicy::NumProcessors
        };
        c.spin_probe_interval = s.2;
        c.tx_retry_backoff_base = s.3;
        c.tx_max_retries = s.4.map_or(RetryLimit::Unlimited, RetryLimit::Limited);
        c.benchmark = w.0;
        c.rbtree.ops_per_thread = w.1;
        c.fft.n = 1 << w.2;
        c.micro.iters_per_thread = w.3;
        c.micro.num_regions = w.4;
        c.seed = w.5;
        c.max_cycles = w.6;
        c
    })
}

fn result() -> impl Strategy<Value = RunResult> {
    (
        prop::sample::select(Benchmark::ALL.to_vec()),
        prop::sample::select(Backend::ALL.to_vec()),
        prop::array::uniform16(0u64..1 << 40),
        prop::array::uniform12(0u64..1 << 40),
        any::<bool>(),
    )
        .prop_map(|(benchmark, backend, ints, energy, ok)| {
            let micros = |x: u64| x as f64 / 1e6;
            RunResult {
                benchmark,
                backend,
                seed: ints[0],
                cycles: ints[1],
                d1_accesses: ints[2] + ints[3],
                d1_hits: ints[2],
                d1_misses: ints[3],
                d1_miss_rate: micros(ints[4] % 1_000_001),
                tlb_accesses: ints[5],
                tlb_misses: ints[6],
                shared_accesses: ints[7],
                bus_busy_cycles: ints[8],
                spin_probes: ints[9],
                tx_commits: ints[10],
                tx_aborts: ints[11],
                sem_blocks: ints[12],
                sem_wakes: ints[13],
                energy_total: micros(ints[14]),
                energy_by_kind: energy.map(micros),
                correctness_ok: ok,
            }
        })
}

proptest! {
    #[test]
    fn config_survives_serialization(cfg in config()) {
        prop_assume!(cfg.validate().is_empty());
        let text = serialize(&cfg);
        let back = load_config(&text).unwrap();
        prop_assert!(back.validate().is_empty());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn csv_round_trips_as_emitted(rows in prop::collection::vec(result(), 1..20)) {
        let text = csv_string(&rows).unwrap();
        let back = parse_csv(&text).unwrap();
        prop_assert_eq!(csv_string(&back).unwrap(), text);
        let mut sorted: Vec<Vec<String>> = rows.iter().map(RunResult::fields).collect();
        sorted.sort_by_key(|f| (f[0].parse::<Benchmark>().unwrap(), f[1].parse::<Backend>().unwrap(), f[2].parse::<u64>().unwrap()));
        let emitted: Vec<Vec<String>> = back.iter().map(RunResult::fields).collect();
        prop_assert_eq!(emitted, sorted);
    }
}

#[test]
fn default_config_round_trips() {
    let cfg = default_config();
    assert_eq!(load_config(&serialize(&cfg)).unwrap(), cfg);
}
