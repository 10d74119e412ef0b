//! Multi-tap least-squares channel estimation from a preamble.

use num_complex::Complex64;

use crate::channel::ChannelTaps;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_condition, solve_hpd, CMat, ZERO};
use crate::sequences::SequenceSet;

/// Gram matrices beyond this condition number are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

/// Column `k` is `[a(k+W); ...; a(k); ...; a(k-W)]`, zero outside the preamble.
#[derive(Debug, Clone)]
pub struct StackedPreamble {
    pub matrix: CMat,
    pub window: usize,
    pub m_tx: usize,
}

impl StackedPreamble {
    /// Symbol index used as the phase reference of the estimate.
    pub fn reference_symbol(&self) -> usize {
        self.matrix.ncols() / 2
    }
}

pub fn stack_preamble(set: &SequenceSet, window: usize) -> Result<StackedPreamble> {
    let (m, len) = (set.count(), set.len());
    if len <= 2 * window {
        return Err(Error::InvalidParameter(format!("preamble length {len} must exceed 2W = {}", 2 * window)));
    }
    let rows = (2 * window + 1) * m;
    let matrix = CMat::from_fn(rows, len, |r, k| {
        let (block, j) = (r / m, r % m);
        // Block 0 holds a(k+W), the last block a(k-W).
        let src = k as isize + window as isize - block as isize;
        if (0..len as isize).contains(&src) { set.sequences[j][src as usize] } else { ZERO }
    });
    Ok(StackedPreamble { matrix, window, m_tx: m })
}

/// `Ĥ̄ = Y Uᴴ (U Uᴴ)⁻¹`, returned as taps `H[-W..=W]`.
///
/// `rx` is `N x L_t` with column `k` the received vector at preamble symbol `k`.
pub fn ls_estimate(rx: &CMat, stacked: &StackedPreamble) -> Result<ChannelTaps> {
    let u = &stacked.matrix;
    if rx.ncols() != u.ncols() {
        return Err(Error::DimensionMismatch(format!("{} received symbols for a {}-symbol preamble", rx.ncols(), u.ncols())));
    }
    let gram = u * u.adjoint();
    let cond = hermitian_condition(&gram);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned { cond, context: "preamble Gram matrix".into() });
    }
    // Solve (U Uᴴ) Ĥ̄ᴴ = U Yᴴ.
    let rhs = u * rx.adjoint();
    let x_adj = solve_hpd(&gram, &rhs, "preamble Gram matrix")?;
    let stacked_est = x_adj.adjoint();
    // Block r of the estimate multiplies a(k+W-r), i.e. it is tap H[r-W].
    ChannelTaps::from_aggregate(&stacked_est, stacked.m_tx, stacked.reference_symbol())
}

/// Collects symbol-rate vectors into an `N x K` matrix.
pub fn to_matrix(samples: &[Vec<Complex64>]) -> CMat {
    let n = samples.first().map(Vec::len).unwrap_or(0);
    CMat::from_fn(n, samples.len(), |i, k| samples[k][i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impairments::complex_gaussian;
    use crate::linalg::{pinv, rel_error};
    use crate::sequences::{design_preamble, DesignOptions};
    use crate::testutil::{convolve, random_matrix, random_taps, random_unimodular_set, rng};

    fn columns(set: &SequenceSet) -> Vec<Vec<Complex64>> {
        (0..set.len()).map(|k| set.column(k)).collect()
    }

    #[test]
    fn stacking_layout() {
        let set = random_unimodular_set(3, 20, &mut rng(1));
        let flat = stack_preamble(&set, 0).unwrap();
        assert_eq!(flat.matrix, CMat::from_fn(3, 20, |j, k| set.sequences[j][k]));
        let st = stack_preamble(&set, 2).unwrap();
        assert_eq!(st.matrix.shape(), (15, 20));
        for k in 0..20usize {
            for block in 0..5usize {
                for j in 0..3 {
                    let src = k as isize + 2 - block as isize;
                    let expect = if (0..20).contains(&src) { set.sequences[j][src as usize] } else { ZERO };
                    assert_eq!(st.matrix[(block * 3 + j, k)], expect);
                }
            }
        }
        assert!(stack_preamble(&set, 10).is_err());
    }

    #[test]
    fn default_dimensions() {
        let set = random_unimodular_set(8, 256, &mut rng(2));
        let st = stack_preamble(&set, 3).unwrap();
        assert_eq!(st.matrix.shape(), (56, 256));
        assert_eq!(st.reference_symbol(), 128);
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let set = design_preamble(4, 64, 2.0, DesignOptions::default(), 5).unwrap();
        let truth = random_taps(4, 4, 2, &mut rng(3));
        let y = convolve(&truth, &columns(&set), 64);
        let est = ls_estimate(&y, &stack_preamble(&set, 2).unwrap()).unwrap();
        assert!(rel_error(&est.aggregate(), &truth.aggregate()) < 1e-8);
        assert_eq!(est.reference_symbol, 32);
    }

    #[test]
    fn constant_phase_is_absorbed_into_the_taps() {
        let set = design_preamble(4, 64, 2.0, DesignOptions::default(), 6).unwrap();
        let truth = random_taps(4, 4, 1, &mut rng(4));
        let (rx_phase, tx_phase) = ([0.3, -1.2, 2.0, 0.7], [1.1, 0.0, -0.4, 2.9]);
        let rotated = truth.rotated(&rx_phase, &tx_phase);
        let y = convolve(&rotated, &columns(&set), 64);
        let est = ls_estimate(&y, &stack_preamble(&set, 1).unwrap()).unwrap();
        for (e, t) in est.taps.iter().zip(&truth.taps) {
            for i in 0..4 {
                for j in 0..4 {
                    let expect = t[(i, j)] * Complex64::from_polar(1.0, rx_phase[i] + tx_phase[j]);
                    assert!((e[(i, j)] - expect).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn matches_pseudo_inverse_and_residual_is_orthogonal() {
        let mut r = rng(7);
        for _ in 0..5 {
            let set = random_unimodular_set(3, 40, &mut r);
            let st = stack_preamble(&set, 1).unwrap();
            let y = random_matrix(5, 40, &mut r);
            let est = ls_estimate(&y, &st).unwrap().aggregate();
            let oracle = &y * pinv(&st.matrix).unwrap();
            assert!(rel_error(&est, &oracle) < 1e-10);
            let resid = (&y - &est * &st.matrix) * st.matrix.adjoint();
            assert!(resid.iter().all(|z| z.norm() < 1e-8 * y.norm()));
        }
    }

    #[test]
    fn estimator_is_unbiased_under_awgn() {
        let set = design_preamble(2, 32, 1.0, DesignOptions::default(), 8).unwrap();
        let st = stack_preamble(&set, 1).unwrap();
        let truth = random_taps(2, 2, 1, &mut rng(9));
        let clean = convolve(&truth, &columns(&set), 32);
        let (sigma2, trials) = (0.1, 200);
        let mut noise_rng = rng(10);
        let mut mean = CMat::zeros(2, 6);
        for _ in 0..trials {
            let y = clean.map(|z| z + complex_gaussian(&mut noise_rng, sigma2));
            mean += ls_estimate(&y, &st).unwrap().aggregate() - truth.aggregate();
        }
        mean /= Complex64::new(trials as f64, 0.0);
        // Each row's error has covariance σ² (U Uᴴ)⁻¹.
        let gram_inv = (&st.matrix * st.matrix.adjoint()).try_inverse().unwrap();
        let expected_sd = (2.0 * sigma2 * gram_inv.trace().re / trials as f64).sqrt();
        assert!(mean.norm() < 3.0 * expected_sd, "{} vs {expected_sd}", mean.norm());
    }

    #[test]
    fn repeated_sequences_are_ill_conditioned() {
        let mut set = random_unimodular_set(2, 30, &mut rng(11));
        set.sequences[1] = set.sequences[0].clone();
        let y = CMat::zeros(2, 30);
        assert!(matches!(ls_estimate(&y, &stack_preamble(&set, 0).unwrap()), Err(Error::IllConditioned { .. })));
        assert!(ls_estimate(&CMat::zeros(2, 29), &stack_preamble(&set, 0).unwrap()).is_err());
    }
}
