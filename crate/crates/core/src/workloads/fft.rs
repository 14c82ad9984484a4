//! In-place iterative radix-2 decimation-in-time FFT. The input is stored
//! bit-reversed by the preamble; each stage's butterflies are dealt to
//! threads round-robin and stages are separated by a barrier.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::barrier::Barrier;
use super::layout::FftLayout;
use super::program::ThreadProgram;
use crate::config::SimConfig;
use crate::memhier::{AddressMap, Data, Hierarchy};
use crate::{Addr, RegionId};

pub const BUTTERFLY_COMPUTE: u64 = 6;
pub const BUTTERFLY_REGION: RegionId = RegionId(0);
pub const BARRIER_REGION: RegionId = RegionId(1);
/// Acceptance bound on the relative error against the direct DFT.
pub const FFT_TOLERANCE: f64 = 1e-9;

pub fn bit_reverse(i: u64, bits: u32) -> u64 {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (64 - bits)
    }
}

fn complex(d: &Data) -> (f64, f64) {
    (f64::from_bits(d.u64_at(0)), f64::from_bits(d.u64_at(8)))
}

fn pack(re: f64, im: f64) -> Data {
    Data::from_pair(re.to_bits(), im.to_bits())
}

/// Seeded real input in [-1, 1).
pub fn fft_input(n: u64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Programs and preamble writes for an explicit real input.
pub fn fft_programs(cfg: &SimConfig, input: &[f64]) -> (Vec<ThreadProgram>, Vec<(Addr, Data)>) {
    let map = AddressMap::new(cfg);
    let layout = FftLayout::new(cfg, &map);
    let n = layout.n;
    assert_eq!(input.len() as u64, n, "input length must equal n");
    let bits = n.trailing_zeros();
    let cores = cfg.num_cores as u64;

    let mut preamble = Vec::new();
    for (m, &x) in input.iter().enumerate() {
        preamble.push((layout.elem(bit_reverse(m as u64, bits)), pack(x, 0.0)));
    }
    for core in 0..cfg.num_cores {
        for k in 0..n / 2 {
            let angle = -2.0 * PI * k as f64 / n as f64;
            preamble.push((
                FftLayout::twiddle(&map, core, k),
                pack(libm::cos(angle), libm::sin(angle)),
            ));
        }
    }

    let barrier = Barrier {
        region: BARRIER_REGION,
        parties: cores,
        counter: layout.counter,
        flag: layout.flag,
        poll_interval: cfg.spin_probe_interval,
    };
    let programs = (0..cfg.num_cores)
        .map(|t| {
            let mut p = ThreadProgram::new();
            for stage in 0..bits {
                let half = 1u64 << stage;
                let stride = n / (2 * half);
                for b in (t as u64..n / 2).step_by(cfg.num_cores) {
                    let k = b % half;
                    let i = (b / half) * 2 * half + k;
                    let j = i + half;
                    let tw = FftLayout::twiddle(&map, t, k * stride);
                    let (ai, aj) = (layout.elem(i), layout.elem(j));
                    p.enter(BUTTERFLY_REGION)
                        .script(alloc::format!("butterfly s{stage} {i}-{j}"), move |cx| {
                            let (wr, wi) = complex(&cx.read(tw, 16)?);
                            let (xr, xi) = complex(&cx.read(ai, 16)?);
                            let (yr, yi) = complex(&cx.read(aj, 16)?);
                            cx.compute(BUTTERFLY_COMPUTE)?;
                            let (tr, ti) = (wr * yr - wi * yi, wr * yi + wi * yr);
                            cx.write(ai, pack(xr + tr, xi + ti))?;
                            cx.write(aj, pack(xr - tr, xi - ti))
                        })
                        .exit(BUTTERFLY_REGION);
                }
                barrier.append(&mut p, stage as u64);
            }
            p
        })
        .collect();
    (programs, preamble)
}

pub fn build_fft(cfg: &SimConfig, seed: u64) -> (Vec<ThreadProgram>, Vec<(Addr, Data)>, Vec<f64>) {
    let input = fft_input(cfg.fft.n as u64, seed);
    let (programs, preamble) = fft_programs(cfg, &input);
    (programs, preamble, input)
}

/// Direct O(n^2) DFT of a real sequence.
pub fn direct_dft(input: &[f64]) -> Vec<(f64, f64)> {
    let n = input.len();
    (0..n)
        .map(|k| {
            input
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (m, &x)| {
                    let angle = -2.0 * PI * ((k * m) % n) as f64 / n as f64;
                    (re + x * libm::cos(angle), im + x * libm::sin(angle))
                })
        })
        .collect()
}

/// Largest error over all bins relative to the largest reference magnitude
/// (absolute error when the reference is all zero).
pub fn max_relative_error(output: &[(f64, f64)], input: &[f64]) -> f64 {
    let reference = direct_dft(input);
    let scale = reference
        .iter()
        .map(|&(r, i)| libm::hypot(r, i))
        .fold(0.0, f64::max);
    let err = output
        .iter()
        .zip(&reference)
        .map(|(&(a, b), &(r, i))| libm::hypot(a - r, b - i))
        .fold(0.0, f64::max);
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

pub fn read_output(hier: &Hierarchy, layout: &FftLayout) -> Option<Vec<(f64, f64)>> {
    (0..layout.n)
        .map(|i| {
            hier.peek(layout.elem(i), 16)
                .map(|b| complex(&Data::new(b)))
        })
        .collect()
}

/// Max relative error of the array in memory against the direct DFT.
pub fn fft_verify(hier: &Hierarchy, layout: &FftLayout, input: &[f64]) -> f64 {
    match read_output(hier, layout) {
        Some(out) if out.len() == input.len() => max_relative_error(&out, input),
        _ => f64::INFINITY,
    }
}
