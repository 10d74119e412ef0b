//! Received-signal synthesis.
//!
//! Sample-rate synthesis evaluates the pulse analytically at every sample;
//! symbol-rate synthesis uses discretized taps, which is the same model
//! sampled at `n = kQ`.

use num_complex::Complex64;

use crate::channel::{ChannelTaps, PulseShape, TwoPathChannel};
use crate::error::{Error, Result};
use crate::impairments::{complex_gaussian, PhaseTrajectory};
use crate::linalg::{cis, ZERO};
use rand_chacha::ChaCha8Rng;

/// Phase trajectories of both ends, indexed from `start` symbols.
#[derive(Debug, Clone, Copy)]
pub struct PhaseView<'a> {
    pub rx: &'a PhaseTrajectory,
    pub tx: &'a PhaseTrajectory,
    pub start: usize,
}

impl PhaseView<'_> {
    fn rx_at(&self, i: usize, k: usize) -> f64 {
        let p = &self.rx.phases[i];
        p[(self.start + k).min(p.len() - 1)]
    }

    fn tx_at(&self, j: usize, k: usize) -> f64 {
        let p = &self.tx.phases[j];
        p[(self.start + k).min(p.len() - 1)]
    }
}

/// Samples `y_i(n)`, `n = 0..n_samples`, at `Q` samples per symbol.
///
/// `tx[j][k]` is the symbol sent by antenna `j` at time `k`. `link_offsets`
/// holds the sum timing offset of each link (row-major in the receive index).
/// Phases are applied per receive sample, rounded down to the symbol grid.
pub fn synthesize_samples(
    channel: &TwoPathChannel,
    pulse: &PulseShape,
    link_offsets: &[f64],
    tx: &[Vec<Complex64>],
    n_samples: usize,
    phases: Option<PhaseView<'_>>,
) -> Result<Vec<Vec<Complex64>>> {
    let (n, m) = channel.los.shape();
    if tx.len() != m || link_offsets.len() != n * m {
        return Err(Error::DimensionMismatch(format!("{} streams and {} offsets for a {n}x{m} channel", tx.len(), link_offsets.len())));
    }
    let q = pulse.oversampling.max(1);
    let qf = q as f64;
    let mut out = vec![vec![ZERO; n_samples]; n];
    let mut link = vec![ZERO; n_samples];
    for (i, y) in out.iter_mut().enumerate() {
        for (j, u) in tx.iter().enumerate() {
            let offset = link_offsets[i * m + j];
            let lo = ((offset - pulse.span) * qf).ceil() as isize;
            let hi = ((offset + pulse.span + channel.delay) * qf).floor() as isize;
            let response: Vec<Complex64> = (lo..=hi)
                .map(|t| crate::channel::link_response(channel, pulse, i, j, t as f64 / qf, offset))
                .collect();
            link.iter_mut().for_each(|z| *z = ZERO);
            for (k, &sym) in u.iter().enumerate() {
                if sym == ZERO {
                    continue;
                }
                let base = (k * q) as isize + lo;
                for (t, h) in response.iter().enumerate() {
                    let idx = base + t as isize;
                    if idx >= 0 && (idx as usize) < n_samples {
                        link[idx as usize] += h * sym;
                    }
                }
            }
            match phases {
                Some(view) => {
                    for (s, (yv, z)) in y.iter_mut().zip(&link).enumerate() {
                        let k = s / q;
                        *yv += z * cis(view.rx_at(i, k) + view.tx_at(j, k));
                    }
                }
                None => y.iter_mut().zip(&link).for_each(|(yv, z)| *yv += z),
            }
        }
    }
    Ok(out)
}

/// Noiseless received sample of one antenna split by origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalTerms {
    /// Principal tap of the co-indexed transmit antenna.
    pub desired: Complex64,
    /// Other taps of the co-indexed transmit antenna.
    pub isi: Complex64,
    /// Every tap of the other transmit antennas.
    pub mai: Complex64,
}

impl SignalTerms {
    pub fn total(&self) -> Complex64 {
        self.desired + self.isi + self.mai
    }
}

/// Symbol-rate received vectors `y(k) = D_rx(k) Σ_w H[w] D_tx(k) x(k-w) + v(k)`.
///
/// `tx[k]` is the length-M transmit vector at time `k`; the output has one
/// length-N vector per `k` in `0..tx.len()`.
pub struct SymbolSynth<'a> {
    pub taps: &'a ChannelTaps,
    pub phases: Option<PhaseView<'a>>,
    pub sigma2: f64,
}

impl SymbolSynth<'_> {
    /// Noiseless output at symbol `k` given the full transmit history.
    pub fn noiseless_at(&self, tx: &[Vec<Complex64>], k: usize) -> Vec<Complex64> {
        let (n, m) = (self.taps.n_rx(), self.taps.m_tx());
        let w_max = self.taps.window as isize;
        let tx_rot: Vec<Complex64> = match self.phases {
            Some(v) => (0..m).map(|j| cis(v.tx_at(j, k))).collect(),
            None => vec![Complex64::new(1.0, 0.0); m],
        };
        let mut y = vec![ZERO; n];
        for w in -w_max..=w_max {
            let src = k as isize - w;
            if src < 0 || src as usize >= tx.len() {
                continue;
            }
            let x = &tx[src as usize];
            let h = self.taps.tap(w).expect("tap inside window");
            for j in 0..m {
                let xj = x[j] * tx_rot[j];
                if xj == ZERO {
                    continue;
                }
                let col = h.column(j);
                for (yi, hij) in y.iter_mut().zip(col.iter()) {
                    *yi += hij * xj;
                }
            }
        }
        if let Some(v) = self.phases {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi *= cis(v.rx_at(i, k));
            }
        }
        y
    }

    /// Desired, ISI and MAI parts of [`Self::noiseless_at`] per receive antenna.
    pub fn decompose(&self, tx: &[Vec<Complex64>], k: usize) -> Vec<SignalTerms> {
        let (n, m) = (self.taps.n_rx(), self.taps.m_tx());
        let w_max = self.taps.window as isize;
        let zero = SignalTerms { desired: ZERO, isi: ZERO, mai: ZERO };
        let mut out = vec![zero; n];
        for w in -w_max..=w_max {
            let src = k as isize - w;
            if src < 0 || src as usize >= tx.len() {
                continue;
            }
            let h = self.taps.tap(w).expect("tap inside window");
            for (i, terms) in out.iter_mut().enumerate() {
                for j in 0..m {
                    let mut v = h[(i, j)] * tx[src as usize][j];
                    if let Some(view) = self.phases {
                        v *= cis(view.rx_at(i, k) + view.tx_at(j, k));
                    }
                    match (i == j, w == 0) {
                        (true, true) => terms.desired += v,
                        (true, false) => terms.isi += v,
                        (false, _) => terms.mai += v,
                    }
                }
            }
        }
        out
    }

    /// Full block with AWGN drawn from `rng`.
    pub fn run(&self, tx: &[Vec<Complex64>], rng: &mut ChaCha8Rng) -> Vec<Vec<Complex64>> {
        (0..tx.len())
            .map(|k| {
                let mut y = self.noiseless_at(tx, k);
                if self.sigma2 > 0.0 {
                    y.iter_mut().for_each(|v| *v += complex_gaussian(rng, self.sigma2));
                }
                y
            })
            .collect()
    }
}
