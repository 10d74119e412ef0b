//! Dual-polarized LoS channel with a Rummler reflection, discretized into
//! symbol-spaced taps.
//!
//! Antenna index `i < N/2` is the H mode of dipole `i`; `i >= N/2` is the V
//! mode of dipole `i - N/2`. Both modes of a dipole share a position.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, ZERO};
use crate::rng::{stream_rng_indexed, Stream};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub type Position = [f64; 3];

/// Free-space wavelength of a carrier.
pub fn carrier_wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Antenna placement on both ends of the link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_rx: usize,
    pub m_tx: usize,
    pub element_spacing: f64,
    pub link_distance: f64,
    pub wavelength: f64,
    pub rx_positions: Vec<Position>,
    pub tx_positions: Vec<Position>,
}

/// Dipole centres on a near-square grid with pitch `d1` in the z = `z` plane.
fn panel_positions(dipoles: usize, d1: f64, z: f64) -> Vec<Position> {
    let cols = (dipoles as f64).sqrt().ceil() as usize;
    let rows = dipoles.div_ceil(cols);
    let (cx, cy) = ((cols - 1) as f64 / 2.0, (rows - 1) as f64 / 2.0);
    (0..dipoles)
        .map(|k| [((k % cols) as f64 - cx) * d1, ((k / cols) as f64 - cy) * d1, z])
        .collect()
}

impl ArrayGeometry {
    /// Facing flat panels of dual-polarized dipoles, `distance` apart.
    pub fn flat_panel(n_rx: usize, m_tx: usize, d1: f64, distance: f64, wavelength: f64) -> Result<Self> {
        if n_rx == 0 || m_tx == 0 || n_rx % 2 != 0 || m_tx % 2 != 0 {
            return Err(Error::InvalidGeometry(format!("antenna counts must be even and positive, got {n_rx}x{m_tx}")));
        }
        if !(d1 > 0.0) || !(distance > 0.0) {
            return Err(Error::InvalidGeometry("spacing and distance must be positive".into()));
        }
        let dup = |p: Vec<Position>| p.iter().chain(p.iter()).copied().collect::<Vec<_>>();
        let geometry = Self {
            n_rx,
            m_tx,
            element_spacing: d1,
            link_distance: distance,
            wavelength,
            rx_positions: dup(panel_positions(n_rx / 2, d1, distance)),
            tx_positions: dup(panel_positions(m_tx / 2, d1, 0.0)),
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Arbitrary placements (single-polarization use allowed).
    pub fn from_positions(rx: Vec<Position>, tx: Vec<Position>, wavelength: f64) -> Result<Self> {
        let distance = rx.first().zip(tx.first()).map(|(r, t)| distance(r, t)).unwrap_or(0.0);
        let geometry = Self {
            n_rx: rx.len(),
            m_tx: tx.len(),
            element_spacing: 0.0,
            link_distance: distance,
            wavelength,
            rx_positions: rx,
            tx_positions: tx,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Swaps the roles of the two ends.
    pub fn reversed(&self) -> Self {
        Self {
            n_rx: self.m_tx,
            m_tx: self.n_rx,
            rx_positions: self.tx_positions.clone(),
            tx_positions: self.rx_positions.clone(),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0) || !self.wavelength.is_finite() {
            return Err(Error::InvalidGeometry(format!("wavelength {} must be positive", self.wavelength)));
        }
        if self.rx_positions.is_empty() || self.tx_positions.is_empty() {
            return Err(Error::InvalidGeometry("no antennas".into()));
        }
        for r in &self.rx_positions {
            for t in &self.tx_positions {
                if distance(r, t) <= 0.0 {
                    return Err(Error::InvalidGeometry("coincident transmit and receive antennas".into()));
                }
            }
        }
        Ok(())
    }

    pub fn pair_distance(&self, rx: usize, tx: usize) -> f64 {
        distance(&self.rx_positions[rx], &self.tx_positions[tx])
    }
}

/// Fractional number of wavelengths in `|a - b|`.
///
/// The length is split into its axial part and the small lateral excess
/// `ρ²/(d + |Δz|)`; the axial part is reduced exactly with fmod, so the
/// phase keeps full precision at link distances of many thousand wavelengths.
fn path_cycles(a: &Position, b: &Position, wavelength: f64) -> f64 {
    let axial = (a[2] - b[2]).abs();
    let lateral2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let d = distance(a, b);
    let excess = if d > 0.0 { lateral2 / (d + axial) } else { 0.0 };
    (axial.rem_euclid(wavelength) + excess).rem_euclid(wavelength) / wavelength
}

fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Spherical-wave array response `exp(-j2π d_ij/λ)`.
pub fn build_los_channel(geometry: &ArrayGeometry) -> Result<CMat> {
    geometry.validate()?;
    Ok(CMat::from_fn(geometry.n_rx, geometry.m_tx, |i, j| {
        let cycles = path_cycles(&geometry.rx_positions[i], &geometry.tx_positions[j], geometry.wavelength);
        cis(-TAU * cycles)
    }))
}

/// Cross-polar amplitude `10^(-XPD/20)`; zero for infinite XPD.
pub fn cross_polar_gain(xpd_db: f64) -> f64 {
    if xpd_db == f64::INFINITY { 0.0 } else { 10f64.powf(-xpd_db / 20.0) }
}

/// Scales the cross-polar quadrants of `h_a` by the cross-polar gain.
pub fn apply_polarization(h_a: &CMat, xpd_db: f64) -> Result<CMat> {
    let (n, m) = h_a.shape();
    if n % 2 != 0 || m % 2 != 0 {
        return Err(Error::DimensionMismatch(format!("polarization needs even dimensions, got {n}x{m}")));
    }
    let chi = cross_polar_gain(xpd_db);
    Ok(CMat::from_fn(n, m, |i, j| if (i < n / 2) == (j < m / 2) { h_a[(i, j)] } else { h_a[(i, j)] * chi }))
}

/// Two-ray fading parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RummlerParams {
    pub notch_depth_db: f64,
    pub interpath_delay: f64,
    pub notch_frequency: f64,
    pub symbol_time: f64,
}

impl RummlerParams {
    /// Reflected-path amplitude `1 - 10^(-ρ/20)`.
    pub fn beta(&self) -> f64 {
        1.0 - 10f64.powf(-self.notch_depth_db / 20.0)
    }

    /// Reflection delay in symbols.
    pub fn delay_symbols(&self) -> f64 {
        self.interpath_delay / self.symbol_time
    }

    fn validate(&self) -> Result<()> {
        let beta = self.beta();
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidParameter(format!("notch depth {} dB gives beta {beta} outside [0, 1]", self.notch_depth_db)));
        }
        if !(self.symbol_time > 0.0) || !(0.0..self.symbol_time).contains(&self.interpath_delay) {
            return Err(Error::InvalidParameter("interpath delay must lie in [0, T)".into()));
        }
        Ok(())
    }
}

/// Direct path plus one delayed reflection.
#[derive(Debug, Clone)]
pub struct TwoPathChannel {
    pub los: CMat,
    /// `β ⊙ R ⊙ H_LoS`.
    pub reflected: CMat,
    /// Reflection delay in symbols.
    pub delay: f64,
}

/// Adds a reflection with amplitude β and i.i.d. uniform phases per element.
///
/// `link_index` selects an independent phase draw (e.g. uplink vs downlink).
pub fn extend_rummler(h_los: &CMat, params: &RummlerParams, seed: u64, link_index: u64) -> Result<TwoPathChannel> {
    params.validate()?;
    let beta = params.beta();
    let mut rng = stream_rng_indexed(seed, Stream::Channel, link_index);
    let (n, m) = h_los.shape();
    let mut reflected = CMat::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let phase = rng.gen_range(0.0..TAU);
            reflected[(i, j)] = h_los[(i, j)] * cis(phase) * beta;
        }
    }
    Ok(TwoPathChannel { los: h_los.clone(), reflected, delay: params.delay_symbols() })
}

/// Combined transmit/receive pulse `g = g_tx * g_rx` (raised cosine).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PulseShape {
    pub rolloff: f64,
    /// One-sided support in symbols.
    pub span: f64,
    pub oversampling: usize,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self { rolloff: 0.25, span: 8.0, oversampling: 8 }
    }
}

impl PulseShape {
    /// Pulse value at `t` symbols.
    pub fn eval(&self, t: f64) -> f64 {
        if t.abs() > self.span {
            return 0.0;
        }
        let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
        let b = self.rolloff;
        let denom = 1.0 - (2.0 * b * t).powi(2);
        if denom.abs() < 1e-10 {
            PI / 4.0 * {
                let u = 1.0 / (2.0 * b);
                (PI * u).sin() / (PI * u)
            }
        } else {
            sinc * (PI * b * t).cos() / denom
        }
    }
}

/// Symbol-spaced taps `H[-W..=W]` of the equivalent channel.
#[derive(Debug, Clone)]
pub struct ChannelTaps {
    pub taps: Vec<CMat>,
    pub window: usize,
    pub reference_symbol: usize,
}

impl ChannelTaps {
    pub fn new(taps: Vec<CMat>, reference_symbol: usize) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::DimensionMismatch(format!("need an odd number of taps, got {}", taps.len())));
        }
        let shape = taps[0].shape();
        if taps.iter().any(|t| t.shape() != shape) {
            return Err(Error::DimensionMismatch("taps differ in shape".into()));
        }
        Ok(Self { window: taps.len() / 2, taps, reference_symbol })
    }

    pub fn n_rx(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn m_tx(&self) -> usize {
        self.taps[0].ncols()
    }

    /// `H[w]`, or `None` outside the window.
    pub fn tap(&self, w: isize) -> Option<&CMat> {
        let idx = w + self.window as isize;
        (0..self.taps.len() as isize).contains(&idx).then(|| &self.taps[idx as usize])
    }

    pub fn principal(&self) -> &CMat {
        &self.taps[self.window]
    }

    /// `[H[-W], ..., H[W]]` as one `N x (2W+1)M` matrix.
    pub fn aggregate(&self) -> CMat {
        let (n, m) = (self.n_rx(), self.m_tx());
        let mut out = CMat::zeros(n, m * self.taps.len());
        for (b, t) in self.taps.iter().enumerate() {
            out.view_mut((0, b * m), (n, m)).copy_from(t);
        }
        out
    }

    /// Inverse of [`ChannelTaps::aggregate`].
    pub fn from_aggregate(agg: &CMat, m_tx: usize, reference_symbol: usize) -> Result<Self> {
        if m_tx == 0 || agg.ncols() % m_tx != 0 {
            return Err(Error::DimensionMismatch("aggregate width is not a multiple of M".into()));
        }
        let taps = (0..agg.ncols() / m_tx).map(|b| agg.columns(b * m_tx, m_tx).into_owned()).collect();
        Self::new(taps, reference_symbol)
    }

    /// Sum of squared tap norms.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_squared()).sum()
    }

    /// Applies receive and transmit phase rotations: `diag(e^{jθ_rx}) H[w] diag(e^{jθ_tx})`.
    pub fn rotated(&self, rx_phase: &[f64], tx_phase: &[f64]) -> Self {
        let taps = self
            .taps
            .iter()
            .map(|t| CMat::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * cis(rx_phase[i] + tx_phase[j])))
            .collect();
        Self { taps, window: self.window, reference_symbol: self.reference_symbol }
    }
}

/// Continuous-time response of link `(i, j)` at `t` symbols, timing
/// offset `offset` symbols included.
pub fn link_response(channel: &TwoPathChannel, pulse: &PulseShape, i: usize, j: usize, t: f64, offset: f64) -> num_complex::Complex64 {
    channel.los[(i, j)] * pulse.eval(t - offset) + channel.reflected[(i, j)] * pulse.eval(t - offset - channel.delay)
}

/// Samples the channel at symbol spacing for lags `-W..=W`, with sum
/// timing offsets `tx_to[j] + rx_to[i]` (symbols).
pub fn discretize_taps(
    channel: &TwoPathChannel,
    pulse: &PulseShape,
    tx_to: &[f64],
    rx_to: &[f64],
    window: usize,
) -> Result<ChannelTaps> {
    let (n, m) = channel.los.shape();
    if tx_to.len() != m || rx_to.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "offset vectors {}x{} for a {n}x{m} channel",
            rx_to.len(),
            tx_to.len()
        )));
    }
    let taps = (-(window as isize)..=window as isize)
        .map(|w| {
            CMat::from_fn(n, m, |i, j| link_response(channel, pulse, i, j, w as f64, tx_to[j] + rx_to[i]))
        })
        .collect();
    ChannelTaps::new(taps, 0)
}

/// Writes the aggregate taps as CSV: one row per receive antenna, columns
/// `re,im` pairs ordered by tap then transmit antenna.
pub fn taps_to_csv(taps: &ChannelTaps) -> String {
    let agg = taps.aggregate();
    let mut out = String::new();
    let header: Vec<String> = (0..agg.ncols())
        .flat_map(|c| {
            let (w, j) = (c / taps.m_tx(), c % taps.m_tx());
            let w = w as isize - taps.window as isize;
            [format!("re_w{w}_tx{j}"), format!("im_w{w}_tx{j}")]
        })
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..agg.nrows() {
        let row: Vec<String> = agg.row(i).iter().flat_map(|z| [format!("{:.17e}", z.re), format!("{:.17e}", z.im)]).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// A zero channel of the given shape, useful as a placeholder.
pub fn zero_taps(n: usize, m: usize, window: usize) -> ChannelTaps {
    ChannelTaps { taps: vec![CMat::from_element(n, m, ZERO); 2 * window + 1], window, reference_symbol: 0 }
}
