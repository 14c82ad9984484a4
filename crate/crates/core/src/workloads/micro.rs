//! Contended shared-counter kernel. Every iteration increments one of
//! `num_regions` counters inside that counter's region.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layout::MicroLayout;
use super::program::ThreadProgram;
use crate::config::SimConfig;
use crate::memhier::{AddressMap, Hierarchy};
use crate::RegionId;

pub const INCREMENT_COMPUTE: u64 = 4;

/// Per-thread region choices. Thread t draws from stream t of one seeded
/// generator, so the choices do not depend on the core count.
pub fn region_choices(cfg: &SimConfig, seed: u64, thread: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(thread as u64);
    let r = cfg.micro.num_regions as usize;
    (0..cfg.micro.iters_per_thread)
        .map(|_| if r == 1 { 0 } else { rng.gen_range(0..r) })
        .collect()
}

/// Programs plus the expected final value of every counter.
pub fn build_micro(cfg: &SimConfig, seed: u64) -> (Vec<ThreadProgram>, Vec<u64>) {
    let layout = MicroLayout::new(cfg, &AddressMap::new(cfg));
    let mut expected = vec![0u64; cfg.micro.num_regions as usize];
    let programs = (0..cfg.num_cores)
        .map(|t| {
            let mut p = ThreadProgram::new();
            for r in region_choices(cfg, seed, t) {
                expected[r] += 1;
                let addr = layout.counter(r);
                p.enter(RegionId(r))
                    .script(format!("increment r{r}"), move |cx| {
                        let v = cx.read_u64(addr)?;
                        cx.compute(INCREMENT_COMPUTE)?;
                        cx.write_u64(addr, v + 1)
                    })
                    .exit(RegionId(r));
            }
            p
        })
        .collect();
    (programs, expected)
}

/// Compares every counter with its expected increment count.
pub fn micro_verify(
    hier: &Hierarchy,
    layout: &MicroLayout,
    expected: &[u64],
) -> Result<u64, alloc::string::String> {
    let mut total = 0;
    for (r, &want) in expected.iter().enumerate() {
        let bytes = hier.peek(layout.counter(r), 8).ok_or("counter unmapped")?;
        let got = u64::from_le_bytes(bytes.try_into().expect("8 bytes"));
        if got != want {
            return Err(format!("counter {r} holds {got}, expected {want}"));
        }
        total += got;
    }
    Ok(total)
}
