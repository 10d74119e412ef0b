//! Shared helpers for unit tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelTaps;
use crate::linalg::{CMat, ZERO};
use crate::sequences::SequenceSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_taps(n: usize, m: usize, window: usize, rng: &mut ChaCha8Rng) -> ChannelTaps {
    ChannelTaps::new((0..2 * window + 1).map(|_| random_matrix(n, m, rng)).collect(), 0).unwrap()
}

pub fn random_unimodular_set(m: usize, len: usize, rng: &mut ChaCha8Rng) -> SequenceSet {
    let seqs = (0..m).map(|_| (0..len).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..6.3))).collect()).collect();
    SequenceSet::new(seqs, 0).unwrap()
}

/// `y(k) = Σ_w H[w] x(k - w)` over `0..len`, with `x` zero outside `0..x.len()`.
pub fn convolve(taps: &ChannelTaps, x: &[Vec<Complex64>], len: usize) -> CMat {
    let n = taps.n_rx();
    let w = taps.window as isize;
    let mut y = CMat::from_element(n, len, ZERO);
    for k in 0..len as isize {
        for lag in -w..=w {
            let src = k - lag;
            if !(0..x.len() as isize).contains(&src) {
                continue;
            }
            let h = taps.tap(lag).unwrap();
            for i in 0..n {
                for (j, s) in x[src as usize].iter().enumerate() {
                    y[(i, k as usize)] += h[(i, j)] * s;
                }
            }
        }
    }
    y
}
