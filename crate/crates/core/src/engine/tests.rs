use super::*;
use crate::config::{default_config, Benchmark};
use crate::memhier::Data;
use crate::workloads::Workload;
use alloc::vec;

fn word(sys: &System, a: Addr) -> u64 {
    Data::new(sys.hierarchy().peek(a, 8).unwrap()).as_u64()
}

fn cfg(backend: Backend, cores: usize) -> SimConfig {
    let mut c = default_config();
    c.backend = backend;
    c.num_cores = cores;
    c
}

fn empty(n: usize) -> Vec<ThreadProgram> {
    (0..n).map(|_| ThreadProgram::new()).collect()
}

fn prog(ops: &[AbstractOp]) -> ThreadProgram {
    let mut p = ThreadProgram::new();
    for &op in ops {
        p.op(op);
    }
    p
}

const R0: RegionId = RegionId(0);
const R1: RegionId = RegionId(1);

fn enter(r: RegionId) -> AbstractOp {
    AbstractOp::Enter { region: r }
}

fn exit(r: RegionId) -> AbstractOp {
    AbstractOp::Exit { region: r }
}

fn compute(cycles: u64) -> AbstractOp {
    AbstractOp::Compute { cycles }
}

fn small_micro(backend: Backend) -> SimConfig {
    let mut c = default_config();
    c.backend = backend;
    c.benchmark = Benchmark::Micro;
    c.micro.iters_per_thread = 12;
    c
}

fn built(c: &SimConfig) -> System {
    let w = Workload::build(c);
    let mut sys = System::new(c.clone(), w.programs.clone(), w.regions).unwrap();
    w.install(sys.hierarchy_mut()).unwrap();
    sys
}

#[test]
fn empty_programs_finish_at_zero() {
    let mut sys = System::new(default_config(), empty(4), 0).unwrap();
    assert_eq!(sys.run(), Ok(0));
    assert!(sys.all_finished());
    assert_eq!(sys.cycles(), 0);
    assert_eq!(sys.ledger().total(), 0.0);
    assert_eq!(sys.hierarchy().d1(0).counters().misses, 0);
}

#[test]
fn program_count_must_match_cores() {
    assert_eq!(
        System::new(default_config(), empty(3), 0).err(),
        Some(InitError::ProgramCountMismatch {
            expected: 4,
            got: 3
        })
    );
}

#[test]
fn invalid_config_is_rejected() {
    let mut c = default_config();
    c.num_cores = 0;
    assert!(matches!(
        System::new(c, empty(0), 0),
        Err(InitError::InvalidConfig(_))
    ));
}

#[test]
fn caches_start_cold() {
    let sys = built(&small_micro(Backend::Semaphore));
    for c in 0..4 {
        assert_eq!(sys.hierarchy().d1(c).valid_lines(), 0);
        assert_eq!(sys.processor(c).state, ProcessorState::Running);
        assert_eq!(sys.processor(c).program_counter(), 0);
    }
    assert_eq!(sys.clock(), 0);
}

#[test]
fn compute_occupies_core_without_traffic() {
    let mut programs = empty(4);
    programs[0] = prog(&[compute(5)]);
    let mut sys = System::new(default_config(), programs, 0).unwrap();
    let rep = sys.step().unwrap().clone();
    assert_eq!(sys.processor(0).op_completion_cycle, 5);
    assert!(rep.accesses.is_empty() && rep.bus_grants.is_empty());
    assert_eq!(sys.ledger().count(EnergyEventKind::ComputeActive), 5);
    assert_eq!(
        rep.events,
        [ChargedEvent {
            core: Some(0),
            kind: EnergyEventKind::ComputeActive,
            count: 5
        }]
    );
}

#[test]
fn waiting_core_costs_idle_energy_once_per_cycle() {
    let programs = vec![
        prog(&[enter(R0), compute(50), exit(R0)]),
        prog(&[enter(R0), exit(R0)]),
    ];
    let mut sys = System::new(cfg(Backend::Semaphore, 2), programs, 1).unwrap();
    sys.step().unwrap();
    assert_eq!(sys.processor(1).state, ProcessorState::Waiting);
    let rep = sys.step().unwrap().clone();
    assert_eq!(sys.processor(1).state, ProcessorState::Waiting);
    let idle: Vec<_> = rep
        .events
        .iter()
        .filter(|e| e.kind == EnergyEventKind::BlockedIdle)
        .collect();
    assert_eq!(idle.len(), 1);
    assert_eq!(idle[0].count, 1);
    assert!(rep.transitions.is_empty());
}

#[test]
fn same_cycle_shared_ops_serialize_on_the_bus() {
    let c = cfg(Backend::Semaphore, 2);
    let map = crate::memhier::AddressMap::new(&c);
    let a = map.shared_base(0);
    let programs = vec![
        prog(&[AbstractOp::Read { vaddr: a, size: 8 }]),
        prog(&[AbstractOp::Read {
            vaddr: a + 64,
            size: 8,
        }]),
    ];
    let mut sys = System::new(c.clone(), programs, 0).unwrap();
    let rep = sys.step().unwrap().clone();
    assert_eq!(rep.bus_grants.len(), 2);
    let (g0, g1) = (rep.bus_grants[0], rep.bus_grants[1]);
    assert_eq!(g0.granted, 0);
    assert_eq!(g1.granted, g0.granted + c.bus_cycles_per_transfer);
}

fn holder_and_idle(cores: usize) -> System {
    let mut programs = empty(cores);
    programs[0] = prog(&[enter(R0), compute(100), exit(R0)]);
    for p in programs.iter_mut().skip(1) {
        *p = prog(&[compute(100)]);
    }
    let mut sys = System::new(cfg(Backend::Semaphore, cores), programs, 1).unwrap();
    sys.step().unwrap();
    sys
}

#[test]
fn block_processor_queues_fifo() {
    let mut sys = holder_and_idle(4);
    sys.block_processor(1, R0).unwrap();
    assert_eq!(sys.processor(1).state, ProcessorState::Waiting);
    assert_eq!(sys.processor(1).blocked_on, Some(R0));
    sys.block_processor(3, R0).unwrap();
    let q: Vec<_> = sys.backend().semaphore(R0).unwrap().queue().collect();
    assert_eq!(q, [1, 3]);
    assert_eq!(sys.block_processor(1, R0), Err(EngineError::NotRunning(1)));
}

#[test]
fn block_finished_core_is_an_error() {
    let mut programs = empty(2);
    programs[1] = prog(&[enter(R0), compute(100), exit(R0)]);
    let mut sys = System::new(cfg(Backend::Semaphore, 2), programs, 1).unwrap();
    sys.step().unwrap();
    assert_eq!(sys.processor(0).state, ProcessorState::Finished);
    assert_eq!(sys.block_processor(0, R0), Err(EngineError::NotRunning(0)));
    assert_eq!(sys.block_processor(7, R0), Err(EngineError::NoSuchCore(7)));
}

#[test]
fn block_with_free_permit_is_refused() {
    let mut sys = System::new(
        cfg(Backend::Semaphore, 2),
        vec![prog(&[compute(9)]), prog(&[compute(9)])],
        1,
    )
    .unwrap();
    assert_eq!(
        sys.block_processor(0, R0),
        Err(EngineError::PermitAvailable(R0))
    );
    let mut lock = System::new(cfg(Backend::Lock, 2), empty(2), 1).unwrap();
    assert_eq!(lock.block_processor(0, R0), Err(EngineError::NoSemaphore));
}

#[test]
fn woken_core_runs_next_cycle() {
    let mut sys = holder_and_idle(4);
    sys.block_processor(2, R0).unwrap();
    sys.step().unwrap();
    let c = sys.clock();
    sys.wake_processor(2).unwrap();
    assert_eq!(sys.processor(2).state, ProcessorState::Ready);
    assert_eq!(sys.processor(2).blocked_on, None);
    assert_eq!(sys.ledger().count(EnergyEventKind::WakeupEvent), 1);
    let rep = sys.step().unwrap().clone();
    assert_eq!(rep.cycle, c);
    assert_eq!(sys.processor(2).state, ProcessorState::Running);
    assert!(rep.transitions.contains(&Transition {
        core: 2,
        from: ProcessorState::Ready,
        to: ProcessorState::Running
    }));
}

#[test]
fn wake_running_core_is_an_error() {
    let mut sys = holder_and_idle(2);
    assert_eq!(sys.wake_processor(1), Err(EngineError::NotWaiting(1)));
}

#[test]
fn cores_woken_together_resume_together_in_wake_order() {
    let mut sys = holder_and_idle(4);
    sys.block_processor(3, R0).unwrap();
    sys.block_processor(1, R0).unwrap();
    sys.wake_processor(3).unwrap();
    sys.wake_processor(1).unwrap();
    assert_eq!(sys.ready_queue().collect::<Vec<_>>(), [3, 1]);
    let rep = sys.step().unwrap().clone();
    let promoted: Vec<_> = rep
        .transitions
        .iter()
        .filter(|t| t.to == ProcessorState::Running)
        .map(|t| t.core)
        .collect();
    assert_eq!(promoted, [3, 1]);
}

#[test]
fn semaphore_pair_completes() {
    let programs = vec![prog(&[enter(R0), exit(R0)]), prog(&[enter(R0), exit(R0)])];
    let mut sys = System::new(cfg(Backend::Semaphore, 2), programs, 1).unwrap();
    sys.run().unwrap();
    assert!(sys.all_finished());
    assert!(sys.backend().counters().sem_blocks <= 1);
}

#[test]
fn reentering_a_held_lock_spins_to_the_cycle_limit() {
    let mut c = cfg(Backend::Lock, 2);
    c.max_cycles = 3_000;
    let programs = vec![
        prog(&[enter(R0), enter(R0), exit(R0), exit(R0)]),
        ThreadProgram::new(),
    ];
    let mut sys = System::new(c, programs, 1).unwrap();
    assert_eq!(
        sys.run(),
        Err(RunError::CycleLimitExceeded { limit: 3_000 })
    );
    assert!(sys.backend().counters().failed_probes > 100);
}

#[test]
fn deadlock_detection_cases() {
    let mut done = System::new(default_config(), empty(4), 0).unwrap();
    done.run().unwrap();
    assert!(!done.detect_deadlock());

    let running = holder_and_idle(2);
    assert!(!running.detect_deadlock());

    let programs = vec![
        prog(&[enter(R0), compute(10), enter(R1), exit(R1), exit(R0)]),
        prog(&[enter(R1), compute(10), enter(R0), exit(R0), exit(R1)]),
    ];
    let mut sys = System::new(cfg(Backend::Semaphore, 2), programs, 2).unwrap();
    match sys.run() {
        Err(RunError::DeadlockDetected { waiting, .. }) => {
            assert_eq!(waiting, [(0, Some(R1)), (1, Some(R0))]);
        }
        other => panic!("expected deadlock, got {other:?}"),
    }
    assert!(sys.detect_deadlock());
}

#[test]
fn backoff_timer_is_not_a_deadlock() {
    let mut c = small_micro(Backend::Transaction);
    c.micro.iters_per_thread = 4;
    let mut sys = built(&c);
    let mut saw_timer = false;
    while !sys.all_finished() {
        sys.step().unwrap();
        if sys.processors().iter().any(|p| p.wake_at.is_some()) {
            saw_timer = true;
            assert!(!sys.detect_deadlock());
        }
    }
    assert!(saw_timer);
}

fn trace(c: &SimConfig) -> (Vec<StepReport>, System) {
    let mut sys = built(c);
    let mut reports = Vec::new();
    sys.run_observed(|r| reports.push(r.clone())).unwrap();
    (reports, sys)
}

#[test]
fn runs_are_deterministic() {
    for b in Backend::ALL {
        let c = small_micro(b);
        let (ra, sa) = trace(&c);
        let (rb, sb) = trace(&c);
        assert_eq!(ra, rb, "{b}");
        assert_eq!(sa.ledger().total().to_bits(), sb.ledger().total().to_bits());
    }
}

#[test]
fn fast_forward_matches_observed_run() {
    for b in Backend::ALL {
        let c = small_micro(b);
        let (_, observed) = trace(&c);
        let mut fast = built(&c);
        fast.run().unwrap();
        assert_eq!(fast.cycles(), observed.cycles(), "{b}");
        for k in EnergyEventKind::ALL {
            assert_eq!(
                fast.ledger().count(k),
                observed.ledger().count(k),
                "{b} {k:?}"
            );
        }
    }
}

#[test]
fn report_events_sum_to_ledger() {
    for b in Backend::ALL {
        let (reports, sys) = trace(&small_micro(b));
        let mut counts = [0u64; EnergyEventKind::COUNT];
        for r in &reports {
            for e in &r.events {
                counts[e.kind.index()] += e.count;
            }
        }
        let mut fresh = EnergyLedger::new(*sys.ledger().coefficients());
        for k in EnergyEventKind::ALL {
            assert_eq!(counts[k.index()], sys.ledger().count(k), "{b} {k:?}");
            fresh.charge(k, counts[k.index()]);
        }
        assert_eq!(fresh.total(), sys.ledger().total());
    }
}

#[test]
fn transitions_and_bus_obey_the_rules() {
    for b in Backend::ALL {
        let c = small_micro(b);
        let (reports, _) = trace(&c);
        let mut state = [ProcessorState::Running; 4];
        let mut last_grant: Option<Cycle> = None;
        for r in &reports {
            let before = state;
            for t in &r.transitions {
                assert_eq!(state[t.core], t.from);
                assert!(t.from.may_become(t.to), "{t:?}");
                state[t.core] = t.to;
            }
            for a in &r.accesses {
                assert_ne!(
                    before[a.core],
                    ProcessorState::Waiting,
                    "{b}: waiting core accessed memory"
                );
            }
            for g in &r.bus_grants {
                assert_ne!(before[g.core], ProcessorState::Waiting);
                assert!(g.granted - g.requested < 4 * c.bus_cycles_per_transfer);
                if let Some(l) = last_grant {
                    assert!(g.granted >= l + c.bus_cycles_per_transfer);
                }
                last_grant = Some(g.granted);
            }
        }
        assert!(state.iter().all(|&s| s == ProcessorState::Finished));
    }
}

#[test]
fn audit_finds_nothing_on_workloads() {
    for b in Backend::ALL {
        let mut sys = built(&small_micro(b));
        sys.enable_audit();
        sys.run().unwrap();
        assert_eq!(sys.audit_findings(), &[], "{b}");
        assert_eq!(sys.stray_shared_writes(), 0);
    }
}

#[test]
fn transactional_read_sees_own_buffered_write() {
    let c = cfg(Backend::Transaction, 1);
    let a = crate::memhier::AddressMap::new(&c).shared_base(0);
    let mut p = ThreadProgram::new();
    p.enter(R0)
        .op(AbstractOp::Write {
            vaddr: a,
            data: Data::from_u64(5),
        })
        .script("check", move |cx| {
            let v = cx.read_u64(a)?;
            cx.write_u64(a + 8, v)
        })
        .exit(R0);
    let mut sys = System::new(c, vec![p], 1).unwrap();
    while word(&sys, a + 8) == 0 && !sys.all_finished() {
        sys.step().unwrap();
        if sys.processor(0).region.is_some() {
            assert_eq!(word(&sys, a), 0);
        }
    }
    sys.run().unwrap();
    assert_eq!(word(&sys, a + 8), 5);
}
