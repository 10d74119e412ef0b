//! Preamble sequence sets.
//!
//! The designed family minimizes the weighted integrated sidelobe level of
//! all auto- and cross-correlations inside the timing-offset lag window,
//! subject to unit modulus, by majorization-minimization with a spectral
//! bound on the quadratic term.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Floor reported when a correlation is exactly zero.
pub const ISOLATION_FLOOR_DB: f64 = -300.0;

/// A set of `M` equal-length preamble sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceSet {
    pub sequences: Vec<Vec<Complex64>>,
    /// Largest weighted lag magnitude (lags `-K..=K` carry weight one).
    pub lag_window: usize,
    /// Objective value after each accepted iterate, starting with the initial point.
    pub design_objective_history: Vec<f64>,
}

impl SequenceSet {
    pub fn new(sequences: Vec<Vec<Complex64>>, lag_window: usize) -> Result<Self> {
        let len = sequences.first().map(Vec::len).unwrap_or(0);
        if sequences.is_empty() || len == 0 {
            return Err(Error::InvalidParameter("empty sequence set".into()));
        }
        if sequences.iter().any(|s| s.len() != len) {
            return Err(Error::DimensionMismatch("sequences differ in length".into()));
        }
        Ok(Self { sequences, lag_window, design_objective_history: Vec::new() })
    }

    pub fn count(&self) -> usize {
        self.sequences.len()
    }

    pub fn len(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences[0].is_empty()
    }

    /// Symbol `k` of every sequence, i.e. the transmitted vector at time `k`.
    pub fn column(&self, k: usize) -> Vec<Complex64> {
        self.sequences.iter().map(|s| s[k]).collect()
    }

    /// Copy truncated to the first `len` symbols of each sequence.
    pub fn truncated(&self, len: usize) -> Result<Self> {
        if len == 0 || len > self.len() {
            return Err(Error::InvalidParameter(format!("cannot truncate length {} to {len}", self.len())));
        }
        let sequences = self.sequences.iter().map(|s| s[..len].to_vec()).collect();
        Ok(Self { sequences, lag_window: self.lag_window, design_objective_history: Vec::new() })
    }

    /// Weighted sidelobe objective of this set over its lag window.
    pub fn objective(&self) -> f64 {
        CorrelationEngine::new(self.len()).objective(&self.sequences, self.lag_window)
    }
}

/// `η(l) = Σ_k a(k+l) b*(k)` with out-of-range terms dropped.
pub fn correlation(a: &[Complex64], b: &[Complex64], lag: isize) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    let len = a.len() as isize;
    if lag.abs() >= len {
        return Err(Error::InvalidParameter(format!("lag {lag} outside (-{len}, {len})")));
    }
    let (start, end) = (0.max(-lag), len.min(len - lag));
    Ok((start..end).map(|k| a[(k + lag) as usize] * b[k as usize].conj()).sum())
}

/// FFT-based correlations for a fixed sequence length.
pub struct CorrelationEngine {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl CorrelationEngine {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { len, forward: planner.plan_fft_forward(2 * len), inverse: planner.plan_fft_inverse(2 * len) }
    }

    fn spectrum(&self, seq: &[Complex64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * self.len];
        buf[..self.len].copy_from_slice(seq);
        self.forward.process(&mut buf);
        buf
    }

    fn spectra(&self, seqs: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        seqs.iter().map(|s| self.spectrum(s)).collect()
    }

    /// Correlation of spectra `fa`, `fb` at lags `-max_lag..=max_lag`.
    fn cross_from_spectra(&self, fa: &[Complex64], fb: &[Complex64], max_lag: usize) -> Vec<Complex64> {
        let n = 2 * self.len;
        let mut buf: Vec<Complex64> = fa.iter().zip(fb).map(|(x, y)| x * y.conj()).collect();
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        (-(max_lag as isize)..=max_lag as isize)
            .map(|l| buf[l.rem_euclid(n as isize) as usize] * scale)
            .collect()
    }

    /// Correlation of `a` and `b` at lags `-max_lag..=max_lag`.
    pub fn cross(&self, a: &[Complex64], b: &[Complex64], max_lag: usize) -> Vec<Complex64> {
        self.cross_from_spectra(&self.spectrum(a), &self.spectrum(b), max_lag)
    }

    /// All pairwise profiles: entry `[j][p][l + K]` is `η_{j,p}(l)`.
    pub fn profiles(&self, seqs: &[Vec<Complex64>], max_lag: usize) -> Vec<Vec<Vec<Complex64>>> {
        let spectra = self.spectra(seqs);
        spectra
            .iter()
            .map(|fj| spectra.iter().map(|fp| self.cross_from_spectra(fj, fp, max_lag)).collect())
            .collect()
    }

    /// Sum of `|η_{j,p}(l)|²` over the window, excluding auto-correlation peaks.
    pub fn objective(&self, seqs: &[Vec<Complex64>], max_lag: usize) -> f64 {
        objective_from_profiles(&self.profiles(seqs, max_lag), max_lag)
    }
}

fn objective_from_profiles(profiles: &[Vec<Vec<Complex64>>], max_lag: usize) -> f64 {
    let mut total = 0.0;
    for (j, row) in profiles.iter().enumerate() {
        for (p, prof) in row.iter().enumerate() {
            for (idx, v) in prof.iter().enumerate() {
                if !(j == p && idx == max_lag) {
                    total += v.norm_sqr();
                }
            }
        }
    }
    total
}

/// Options for [`design_preamble`].
#[derive(Debug, Clone, Copy)]
pub struct DesignOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Use squared extrapolation between MM steps (monotone safeguarded).
    pub accelerate: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { max_iters: 5000, tol: 1e-10, accelerate: true }
    }
}

/// Lag window covering a maximum offset of `tau_max` symbols on either side.
pub fn lag_window(tau_max: f64) -> usize {
    (2.0 * tau_max).ceil().max(0.0) as usize
}

/// Designs `m` unimodular sequences of length `l_t` with low correlation
/// sidelobes for lags up to `⌈2τ_max⌉`.
pub fn design_preamble(m: usize, l_t: usize, tau_max: f64, opts: DesignOptions, seed: u64) -> Result<SequenceSet> {
    let window = lag_window(tau_max);
    if m == 0 || l_t == 0 {
        return Err(Error::InvalidParameter("sequence count and length must be positive".into()));
    }
    if l_t <= m * window || window >= l_t {
        return Err(Error::InvalidParameter(format!(
            "length {l_t} too short for {m} sequences with lag window {window}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Sequence);
    let init: Vec<Vec<Complex64>> = (0..m)
        .map(|_| (0..l_t).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))).collect())
        .collect();
    let mut designer = MmDesigner::new(m, l_t, window);
    let (sequences, history) = designer.run(init, opts);
    Ok(SequenceSet { sequences, lag_window: window, design_objective_history: history })
}

struct MmDesigner {
    m: usize,
    len: usize,
    window: usize,
    engine: CorrelationEngine,
    /// Count of in-window neighbours of each position (including itself).
    band_counts: Vec<f64>,
    sidelobe_weight: f64,
    min_band_eig: f64,
    symbol_fft: Arc<dyn Fft<f64>>,
}

impl MmDesigner {
    fn new(m: usize, len: usize, window: usize) -> Self {
        let band_counts = (0..len)
            .map(|n| (n.min(window) + (len - 1 - n).min(window) + 1) as f64)
            .collect();
        // Largest number of terms in any single correlation coefficient.
        let sidelobe_weight = if m > 1 { len as f64 } else { (len - 1) as f64 };
        let band = DMatrix::<f64>::from_fn(len, len, |a, b| if a.abs_diff(b) <= window { 1.0 } else { 0.0 });
        let t_min = band.symmetric_eigenvalues().min();
        let min_band_eig = if m > 1 { (m as f64 * t_min).min(0.0) - 1.0 } else { t_min - 1.0 };
        let symbol_fft = FftPlanner::new().plan_fft_forward(2 * len);
        Self { m, len, window, engine: CorrelationEngine::new(len), band_counts, sidelobe_weight, min_band_eig, symbol_fft }
    }

    fn run(&mut self, mut x: Vec<Vec<Complex64>>, opts: DesignOptions) -> (Vec<Vec<Complex64>>, Vec<f64>) {
        let mut f = self.engine.objective(&x, self.window);
        let mut history = vec![f];
        // Below this the sidelobes are at round-off level.
        let floor = f * 1e-20;
        if self.window == 0 && self.m == 1 {
            return (x, history);
        }
        let mut iters = 0;
        while iters < opts.max_iters {
            let (next, f_next) = if opts.accelerate {
                iters += 2;
                self.squarem_step(&x)
            } else {
                iters += 1;
                let y = self.mm_step(&x);
                let fy = self.engine.objective(&y, self.window);
                (y, fy)
            };
            let rel = (f - f_next).abs() / f.max(f64::MIN_POSITIVE);
            x = next;
            f = f_next;
            history.push(f);
            if rel < opts.tol || f <= floor {
                break;
            }
        }
        (x, history)
    }

    /// Extrapolated step; falls back to the plain double MM step when the
    /// extrapolated point does not improve on it.
    fn squarem_step(&self, x0: &[Vec<Complex64>]) -> (Vec<Vec<Complex64>>, f64) {
        let x1 = self.mm_step(x0);
        let x2 = self.mm_step(&x1);
        let f2 = self.engine.objective(&x2, self.window);
        let mut r2 = 0.0;
        let mut v2 = 0.0;
        for p in 0..self.m {
            for n in 0..self.len {
                let r = x1[p][n] - x0[p][n];
                let v = x2[p][n] - x1[p][n] - r;
                r2 += r.norm_sqr();
                v2 += v.norm_sqr();
            }
        }
        if v2 == 0.0 {
            return (x2, f2);
        }
        let mut alpha = -(r2 / v2).sqrt();
        if alpha > -1.0 {
            return (x2, f2);
        }
        for _ in 0..8 {
            let xe: Vec<Vec<Complex64>> = (0..self.m)
                .map(|p| {
                    (0..self.len)
                        .map(|n| {
                            let r = x1[p][n] - x0[p][n];
                            let v = x2[p][n] - x1[p][n] - r;
                            unit_phase(x0[p][n] - 2.0 * alpha * r + alpha * alpha * v, x2[p][n])
                        })
                        .collect()
                })
                .collect();
            let fe = self.engine.objective(&xe, self.window);
            if fe <= f2 {
                // One MM step from the extrapolated point keeps the iterate monotone.
                let xs = self.mm_step(&xe);
                let fs = self.engine.objective(&xs, self.window);
                return (xs, fs);
            }
            alpha = (alpha - 1.0) / 2.0;
            if alpha > -1.0 {
                break;
            }
        }
        (x2, f2)
    }

    /// One majorization-minimization update of all sequences.
    fn mm_step(&self, x: &[Vec<Complex64>]) -> Vec<Vec<Complex64>> {
        let k = self.window;
        let profiles = self.engine.profiles(x, k);
        let gram_bound = self.gram_spectral_bound(&profiles);
        let lambda2 = gram_bound - self.sidelobe_weight * self.min_band_eig;
        let mut out = Vec::with_capacity(self.m);
        for p in 0..self.m {
            let mut next = Vec::with_capacity(self.len);
            for n in 0..self.len {
                let mut g = Complex64::new(0.0, 0.0);
                let lo = -(k.min(n) as isize);
                let hi = k.min(self.len - 1 - n) as isize;
                for (j, xj) in x.iter().enumerate() {
                    let prof = &profiles[j][p];
                    for l in lo..=hi {
                        if j == p && l == 0 {
                            continue;
                        }
                        g += prof[(l + k as isize) as usize].conj() * xj[(n as isize + l) as usize];
                    }
                }
                let row_sum = self.m as f64 * self.band_counts[n] - 1.0;
                let c = lambda2 + self.sidelobe_weight * row_sum;
                next.push(unit_phase(c * x[p][n] - g, x[p][n]));
            }
            out.push(next);
        }
        out
    }

    /// Upper bound on the largest eigenvalue of the block-Toeplitz matrix
    /// generated by the in-window correlations, via Gershgorin on its
    /// block-circulant symbol at `2L` frequencies.
    fn gram_spectral_bound(&self, profiles: &[Vec<Vec<Complex64>>]) -> f64 {
        let k = self.window;
        let n = 2 * self.len;
        // symbol[p][j][freq] = Σ_l conj(η_{j,p}(l)) e^{-jωl}  (row p, column j)
        let mut row_sums = vec![0.0; n];
        for p in 0..self.m {
            let mut sums = vec![0.0; n];
            for (j, row) in profiles.iter().enumerate() {
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for l in -(k as isize)..=k as isize {
                    if j == p && l == 0 {
                        continue;
                    }
                    buf[l.rem_euclid(n as isize) as usize] = row[p][(l + k as isize) as usize].conj();
                }
                self.symbol_fft.process(&mut buf);
                for (s, v) in sums.iter_mut().zip(&buf) {
                    *s += v.norm();
                }
            }
            for (r, s) in row_sums.iter_mut().zip(sums) {
                *r = f64::max(*r, s);
            }
        }
        row_sums.into_iter().fold(0.0, f64::max)
    }
}

fn unit_phase(z: Complex64, fallback: Complex64) -> Complex64 {
    let r = z.norm();
    if r > 0.0 && r.is_finite() {
        z / r
    } else {
        fallback
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Zadoff-Chu sequences with the first `m` roots coprime with `l_t`.
pub fn zc_set(m: usize, l_t: usize) -> Result<SequenceSet> {
    if l_t < 2 || m == 0 {
        return Err(Error::InvalidParameter(format!("invalid Zadoff-Chu set size {m}x{l_t}")));
    }
    let roots: Vec<usize> = (1..l_t).filter(|&u| gcd(u, l_t) == 1).take(m).collect();
    if roots.len() < m {
        return Err(Error::InvalidParameter(format!("length {l_t} has fewer than {m} admissible roots")));
    }
    let odd = l_t % 2 == 1;
    let sequences = roots
        .iter()
        .map(|&u| {
            (0..l_t)
                .map(|k| {
                    let k = k as f64;
                    let quad = if odd { k * (k + 1.0) } else { k * k };
                    Complex64::from_polar(1.0, -std::f64::consts::PI * u as f64 * quad / l_t as f64)
                })
                .collect()
        })
        .collect();
    SequenceSet::new(sequences, 0)
}

/// Rows `1..=m` of the Sylvester Hadamard matrix of order `l_t`.
pub fn walsh_set(m: usize, l_t: usize) -> Result<SequenceSet> {
    if !l_t.is_power_of_two() || m == 0 || m >= l_t {
        return Err(Error::InvalidParameter(format!("invalid Walsh set size {m}x{l_t}")));
    }
    let sequences = (1..=m)
        .map(|row| {
            (0..l_t)
                .map(|col| {
                    let sign = if (row & col).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                    Complex64::new(sign, 0.0)
                })
                .collect()
        })
        .collect();
    SequenceSet::new(sequences, 0)
}

/// Worst in-window correlation per ordered pair `(j, p)`, in dB relative to `L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationReport {
    pub window: usize,
    /// `pairs[j][p]`: max over `|l| ≤ K` of `20 log10(|η_{j,p}(l)|/L)`, excluding `j = p, l = 0`.
    pub pairs: Vec<Vec<f64>>,
    pub worst_auto_db: f64,
    pub worst_cross_db: f64,
}

impl IsolationReport {
    pub fn worst_db(&self) -> f64 {
        self.worst_auto_db.max(self.worst_cross_db)
    }
}

fn to_db(mag: f64, len: usize) -> f64 {
    if mag > 0.0 {
        (20.0 * (mag / len as f64).log10()).max(ISOLATION_FLOOR_DB)
    } else {
        ISOLATION_FLOOR_DB
    }
}

/// Reports isolation over the set's own lag window.
pub fn isolation_report(set: &SequenceSet) -> IsolationReport {
    isolation_report_window(set, set.lag_window)
}

/// Reports isolation over lags `-window..=window`.
pub fn isolation_report_window(set: &SequenceSet, window: usize) -> IsolationReport {
    let len = set.len();
    let window = window.min(len - 1);
    let profiles = CorrelationEngine::new(len).profiles(&set.sequences, window);
    let mut worst_auto = ISOLATION_FLOOR_DB;
    let mut worst_cross = ISOLATION_FLOOR_DB;
    let pairs = profiles
        .iter()
        .enumerate()
        .map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(|(p, prof)| {
                    let db = prof
                        .iter()
                        .enumerate()
                        .filter(|&(idx, _)| !(j == p && idx == window))
                        .map(|(_, v)| to_db(v.norm(), len))
                        .fold(ISOLATION_FLOOR_DB, f64::max);
                    if j == p {
                        worst_auto = worst_auto.max(db);
                    } else {
                        worst_cross = worst_cross.max(db);
                    }
                    db
                })
                .collect()
        })
        .collect();
    IsolationReport { window, pairs, worst_auto_db: worst_auto, worst_cross_db: worst_cross }
}
