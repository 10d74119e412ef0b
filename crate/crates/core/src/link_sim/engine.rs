//! Block-level simulation of both link directions for one trial.
//!
//! Both directions advance in lockstep. Block `b` is generated with the
//! transmit corrections of the current site state, then block `b-1` is
//! received, so a correction booked from block `b-1` reaches the transmitter
//! one block later.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelTaps;
use crate::channel_est::{ls_estimate, stack_preamble, to_matrix};
use crate::error::Result;
use crate::linalg::{cis, CMat, ZERO};
use crate::link_sim::baselines::{extract_sum_phases, memoryless_mmse, mmse_fir, rotate_links, single_tap_estimate, Method, SumPhaseSolver};
use crate::link_sim::frame::{Block, BlockKind};
use crate::link_sim::modulation::{adaptive_modulation, ModulationEntry, ModulationTable};
use crate::link_sim::qam::Qam;
use crate::link_sim::scenario::{ModulationPolicy, Scenario};
use crate::link_sim::setup::{compensated_taps, synchronize, Direction, Realization, SequenceBank, TimingOutcome};
use crate::link_sim::synth::{PhaseView, SymbolSynth};
use crate::phase_tracking::{estimate_increment_dfb, estimate_increment_weighted, noise_whitening_weights, pilot_system, LinearizedSystem, SiteTracker};
use crate::precoding::{optimize_stacked, sinr, stack_channel, stream_gains, svd_baseline, DesignParams, StackedTapChannel, TransceiverDesign};
use crate::rng::{stream_rng_indexed, Stream};
use crate::sequences::SequenceSet;

/// Reported SINR values are clamped to this many dB.
pub const SINR_CLAMP_DB: f64 = 100.0;
/// Symbols per segment over which the true phases are held constant when measuring SINR.
pub const SINR_SEGMENT: usize = 16;

/// Channel knowledge of one direction, shared by every method.
#[derive(Debug, Clone)]
pub struct LinkInputs {
    /// True symbol-spaced taps after timing compensation (no phase noise).
    pub truth: ChannelTaps,
    /// Multi-tap LS estimate from the data-frame preamble.
    pub estimate: ChannelTaps,
    /// Single-tap LS estimate from the same preamble.
    pub single_tap: CMat,
    /// Single-tap LS estimate over the interior of the preamble's first `L_p`
    /// symbols, which carry the same sequences as every pilot.
    pub pilot_reference: CMat,
    /// Frame symbol at which the estimate's phases are referenced.
    pub reference_symbol: usize,
}

/// Columns `W..L_p-W` of a pilot-length block, free of symbols outside the pilot.
pub(crate) fn interior(block: &CMat, window: usize) -> CMat {
    let len = block.ncols().saturating_sub(2 * window).max(1);
    block.columns(window.min(block.ncols() - 1), len.min(block.ncols())).into_owned()
}

/// Everything a method needs for one trial.
pub struct TrialContext<'a> {
    pub scenario: &'a Scenario,
    pub bank: &'a SequenceBank,
    pub real: Realization,
    pub timing: TimingOutcome,
    pub inputs: [LinkInputs; 2],
    pub table: ModulationTable,
}

pub(crate) fn columns(set: &SequenceSet) -> Vec<Vec<Complex64>> {
    (0..set.len()).map(|k| set.sequences.iter().map(|s| s[k]).collect()).collect()
}

pub(crate) fn set_matrix(set: &SequenceSet) -> CMat {
    CMat::from_fn(set.count(), set.len(), |j, k| set.sequences[j][k])
}

/// Row weights of the per-antenna phase LS for `design`.
pub fn phase_weights(scenario: &Scenario, design: &TransceiverDesign) -> Vec<f64> {
    if scenario.whiten_phase_ls { noise_whitening_weights(design) } else { vec![1.0; design.streams()] }
}

pub(crate) fn add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl<'a> TrialContext<'a> {
    /// Draws the realization, synchronizes and estimates both directions.
    pub fn prepare(scenario: &'a Scenario, bank: &'a SequenceBank, seed: u64) -> Result<Self> {
        let real = Realization::draw(scenario, seed)?;
        let timing = synchronize(scenario, &real, &bank.preamble)?;
        let stacked_preamble = stack_preamble(&bank.preamble, scenario.window_w)?;
        let preamble = columns(&bank.preamble);
        let u = set_matrix(&bank.preamble);
        let mut inputs = Vec::with_capacity(2);
        for dir in Direction::BOTH {
            let truth = compensated_taps(scenario, &real, &timing, dir)?;
            let synth = SymbolSynth { taps: &truth, phases: Some(real.frame_phases(dir)), sigma2: 0.0 };
            let noise = &real.noise[dir.index()];
            let rx: Vec<Vec<Complex64>> = (0..preamble.len()).map(|k| add(&synth.noiseless_at(&preamble, k), &noise[k])).collect();
            let y = to_matrix(&rx);
            let estimate = ls_estimate(&y, &stacked_preamble)?;
            let single_tap = single_tap_estimate(&y, &u)?;
            let l_p = bank.pilots.len();
            let w = scenario.window_w;
            let pilot_reference = single_tap_estimate(&interior(&y.columns(0, l_p).into_owned(), w), &interior(&u.columns(0, l_p).into_owned(), w))?;
            inputs.push(LinkInputs { truth, estimate, single_tap, pilot_reference, reference_symbol: stacked_preamble.reference_symbol() });
        }
        let dl = inputs.pop().expect("two directions");
        let ul = inputs.pop().expect("two directions");
        let table = ModulationTable::square_qam(scenario.max_qam, scenario.target_ser)?;
        Ok(Self { scenario, bank, real, timing, inputs: [ul, dl], table })
    }
}

/// Per-direction results of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionOutcome {
    pub direction: Direction,
    pub predicted_sinr_db: Vec<f64>,
    pub measured_sinr_db: Vec<f64>,
    /// QAM order per stream, 0 for a dropped stream.
    pub qam_order: Vec<u32>,
    pub bit_errors: u64,
    pub bits: u64,
    /// Nominal bits per channel use summed over streams.
    pub spectral_efficiency: f64,
    /// RMSE of the residual sum-phase error over links and data segments (rad).
    pub residual_phase_rmse: f64,
}

impl DirectionOutcome {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 { 0.0 } else { self.bit_errors as f64 / self.bits as f64 }
    }
}

/// Results of one method in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub directions: Vec<DirectionOutcome>,
}

impl MethodOutcome {
    pub fn ber(&self) -> f64 {
        let (e, b) = self.directions.iter().fold((0u64, 0u64), |(e, b), d| (e + d.bit_errors, b + d.bits));
        if b == 0 { 0.0 } else { e as f64 / b as f64 }
    }

    /// Spectral efficiency averaged over directions.
    pub fn spectral_efficiency(&self) -> f64 {
        self.directions.iter().map(|d| d.spectral_efficiency).sum::<f64>() / self.directions.len().max(1) as f64
    }

    /// Measured per-stream SINR (dB) averaged over directions.
    pub fn mean_sinr_db(&self) -> Vec<f64> {
        let ns = self.directions.first().map(|d| d.measured_sinr_db.len()).unwrap_or(0);
        (0..ns)
            .map(|m| self.directions.iter().map(|d| d.measured_sinr_db[m]).sum::<f64>() / self.directions.len() as f64)
            .collect()
    }

    pub fn residual_phase_rmse(&self) -> f64 {
        let ms: f64 = self.directions.iter().map(|d| d.residual_phase_rmse.powi(2)).sum::<f64>() / self.directions.len().max(1) as f64;
        ms.sqrt()
    }
}

type Levels = Vec<Option<ModulationEntry>>;

/// Transceiver of a method for one direction, with its predicted SINR.
fn initial_design(ctx: &TrialContext<'_>, method: Method, inputs: &LinkInputs) -> Result<(TransceiverDesign, StackedTapChannel)> {
    let s = ctx.scenario;
    let cap = f64::from(ctx.table.cap_bits());
    let design = match method {
        Method::Proposed => {
            let stacked = stack_channel(&inputs.estimate, s.memory_d);
            let params = DesignParams { sigma2: s.sigma2(), power: s.power(), cap_bits: cap, memory: s.memory_d, max_iters: s.ao_max_iters, tol: s.ao_tol };
            return Ok((optimize_stacked(&stacked, &params)?, stacked));
        }
        Method::Baseline1 => mmse_fir(&inputs.single_tap, &stack_channel(&inputs.estimate, s.memory_d), s.power(), s.sigma2(), cap)?,
        Method::Baseline2 => memoryless_mmse(&stack_channel(&inputs.estimate, 0), s.power(), s.sigma2(), cap)?,
        Method::Baseline3 => svd_baseline(&inputs.estimate, s.power(), s.memory_d, cap)?,
    };
    let stacked = stack_channel(&inputs.estimate, design.memory);
    Ok((design, stacked))
}

/// Centralized sum-phase state of the single-tap baselines.
struct CentralPhase {
    solver: SumPhaseSolver,
    vartheta: Vec<f64>,
    phi: Vec<f64>,
}

struct LinkRun<'c> {
    dir: Direction,
    n: usize,
    inputs: &'c LinkInputs,
    view: PhaseView<'c>,
    noise: &'c [Vec<Complex64>],
    design: TransceiverDesign,
    w_adj: Vec<CMat>,
    gains: Vec<Complex64>,
    pilot_system: Option<LinearizedSystem>,
    phase_weights: Vec<f64>,
    qams: Vec<Qam>,
    active: Vec<bool>,
    x: Vec<Vec<Complex64>>,
    s: Vec<Vec<Complex64>>,
    words: Vec<Vec<u32>>,
    y: Vec<Vec<Complex64>>,
    tx_corr: Vec<Vec<f64>>,
    central: Option<CentralPhase>,
    data_rng: ChaCha8Rng,
    desired_power: Vec<f64>,
    error_power: Vec<f64>,
    bit_errors: u64,
    bits: u64,
    phase_err_sq: f64,
    phase_err_count: usize,
}

impl<'c> LinkRun<'c> {
    fn set_design(&mut self, design: TransceiverDesign, stacked: &StackedTapChannel) {
        let d = design.memory as isize;
        self.w_adj = (-d..=d).map(|k| design.decorrelator_tap(k).adjoint()).collect();
        self.gains = stream_gains(&design, stacked);
        self.design = design;
    }

    fn memory(&self) -> usize {
        self.design.memory
    }

    fn ensure_received(&mut self, upto: usize) {
        let upto = upto.min(self.noise.len());
        let synth = SymbolSynth { taps: &self.inputs.truth, phases: Some(self.view), sigma2: 0.0 };
        while self.y.len() < upto {
            let k = self.y.len();
            let v = add(&synth.noiseless_at(&self.x, k), &self.noise[k]);
            self.y.push(v);
        }
    }

    fn phase(&self, rx: bool, ant: usize, k: usize) -> f64 {
        let traj = if rx { self.view.rx } else { self.view.tx };
        let p = &traj.phases[ant];
        p[(self.view.start + k).min(p.len() - 1)]
    }

    /// Decorrelator outputs `r(k) = Σ_d W(d)ᴴ z(k-d)` for `k` in `block`, with
    /// `z = y ⊙ e^{-j rx_corr}`.
    fn filter(&self, block: &Block, rx_corr: Option<&[f64]>) -> CMat {
        let d = self.memory() as isize;
        let ns = self.design.streams();
        let rot: Vec<Complex64> = match rx_corr {
            Some(c) => c.iter().map(|p| cis(-p)).collect(),
            None => vec![Complex64::new(1.0, 0.0); self.n],
        };
        let mut r = CMat::zeros(ns, block.len);
        for (c, k) in block.range().enumerate() {
            for (b, w) in self.w_adj.iter().enumerate() {
                let src = k as isize - (b as isize - d);
                if src < 0 || src as usize >= self.y.len() {
                    continue;
                }
                let y = &self.y[src as usize];
                for s in 0..ns {
                    let mut acc = ZERO;
                    for i in 0..self.n {
                        acc += w[(s, i)] * y[i] * rot[i];
                    }
                    r[(s, c)] += acc;
                }
            }
        }
        r
    }

    fn raw_block(&self, block: &Block) -> CMat {
        CMat::from_fn(self.n, block.len, |i, c| self.y[block.start + c][i])
    }

    fn generate(&mut self, block: &Block, bank: &SequenceBank, tx_corr: &[f64], method: Method) {
        self.tx_corr.push(tx_corr.to_vec());
        let m = self.design.precoder.nrows();
        let ns = self.design.streams();
        let rot: Vec<Complex64> = tx_corr.iter().map(|p| cis(-p)).collect();
        match block.kind {
            BlockKind::Preamble => {
                for k in 0..block.len {
                    self.x.push((0..m).map(|j| bank.preamble.sequences[j][k]).collect());
                    self.s.push(vec![ZERO; ns]);
                    self.words.push(vec![0; ns]);
                }
            }
            BlockKind::Pilot { .. } => {
                let precoded = method.tracks_per_antenna();
                for k in 0..block.len {
                    let u: Vec<Complex64> = (0..m).map(|j| bank.pilots.sequences[j][k]).collect();
                    let x = if precoded {
                        let f = &self.design.precoder;
                        (0..m).map(|j| (0..ns).map(|c| f[(j, c)] * u[c]).sum::<Complex64>() * rot[j]).collect()
                    } else {
                        u
                    };
                    self.x.push(x);
                    self.s.push(vec![ZERO; ns]);
                    self.words.push(vec![0; ns]);
                }
            }
            BlockKind::Data { .. } => {
                let f = &self.design.precoder;
                for _ in 0..block.len {
                    let words: Vec<u32> = self.qams.iter().map(|q| self.data_rng.gen_range(0..q.order())).collect();
                    let s: Vec<Complex64> = words.iter().zip(&self.qams).map(|(w, q)| q.modulate(*w)).collect();
                    let x = (0..m).map(|j| (0..ns).map(|c| f[(j, c)] * s[c]).sum::<Complex64>() * rot[j]).collect();
                    self.x.push(x);
                    self.s.push(s);
                    self.words.push(words);
                }
            }
        }
    }

    /// Measures SINR and the residual phase over one data block.
    fn score(&mut self, block_index: usize, block: &Block, r: &CMat, rx_corr: &[f64]) {
        let ns = self.design.streams();
        let m = self.design.precoder.nrows();
        let d = self.memory() as isize;
        let tx_corr = self.tx_corr[block_index].clone();
        let ref_k = self.inputs.reference_symbol;
        let mut seg = 0;
        while seg < block.len {
            let seg_len = SINR_SEGMENT.min(block.len - seg);
            let kc = block.start + seg + seg_len / 2;
            let rx_rot: Vec<f64> = (0..self.n).map(|i| self.phase(true, i, kc) - rx_corr[i]).collect();
            let tx_rot: Vec<f64> = (0..m).map(|j| self.phase(false, j, kc) - tx_corr[j]).collect();
            for i in 0..self.n {
                for j in 0..m {
                    let e = rx_rot[i] + tx_rot[j] - self.phase(true, i, ref_k) - self.phase(false, j, ref_k);
                    self.phase_err_sq += e * e;
                    self.phase_err_count += 1;
                }
            }
            // T = Σ_d W(d)ᴴ D_rx H[-d]; desired gain of stream s is Σ_j T[s,j] e^{jθ_tx,j} F[j,s].
            let mut t = CMat::zeros(ns, m);
            for (b, w) in self.w_adj.iter().enumerate() {
                let Some(h) = self.inputs.truth.tap(-(b as isize - d)) else { continue };
                let rotated = CMat::from_fn(self.n, m, |i, j| h[(i, j)] * cis(rx_rot[i]));
                t += w * rotated;
            }
            let f = &self.design.precoder;
            let gain: Vec<Complex64> = (0..ns).map(|s| (0..m).map(|j| t[(s, j)] * cis(tx_rot[j]) * f[(j, s)]).sum()).collect();
            for c in seg..seg + seg_len {
                let sym = &self.s[block.start + c];
                for s in 0..ns {
                    let desired = gain[s] * sym[s];
                    self.desired_power[s] += desired.norm_sqr();
                    self.error_power[s] += (r[(s, c)] - desired).norm_sqr();
                }
            }
            seg += seg_len;
        }
    }

    /// Re-modulated hard decisions.
    fn decide(&self, r: &CMat) -> CMat {
        CMat::from_fn(r.nrows(), r.ncols(), |s, c| {
            let q = self.qams[s];
            q.modulate(q.demodulate(r[(s, c)] / self.gains[s]))
        })
    }

    /// Hard decisions counted against the transmitted words.
    fn detect(&mut self, block: &Block, r: &CMat) {
        for (c, k) in block.range().enumerate() {
            for s in 0..r.nrows() {
                if !self.active[s] {
                    continue;
                }
                let q = self.qams[s];
                let word = q.demodulate(r[(s, c)] / self.gains[s]);
                self.bit_errors += u64::from((word ^ self.words[k][s]).count_ones());
                self.bits += u64::from(q.bits_per_symbol());
            }
        }
    }

    fn outcome(&self, predicted: Vec<f64>, levels: &Levels) -> DirectionOutcome {
        let measured = self
            .desired_power
            .iter()
            .zip(&self.error_power)
            .map(|(d, e)| if *e > 0.0 { to_db(d / e) } else { SINR_CLAMP_DB })
            .collect();
        DirectionOutcome {
            direction: self.dir,
            predicted_sinr_db: predicted,
            measured_sinr_db: measured,
            qam_order: levels.iter().map(|l| l.map_or(0, |e| e.order)).collect(),
            bit_errors: self.bit_errors,
            bits: self.bits,
            spectral_efficiency: levels.iter().map(|l| l.map_or(0, |e| e.bits) as f64).sum(),
            residual_phase_rmse: if self.phase_err_count > 0 { (self.phase_err_sq / self.phase_err_count as f64).sqrt() } else { 0.0 },
        }
    }
}

fn to_db(v: f64) -> f64 {
    (10.0 * v.log10()).clamp(-SINR_CLAMP_DB, SINR_CLAMP_DB)
}

/// Runs one method over the first `subframes` subframes with fixed modulation levels.
fn run_pass(ctx: &TrialContext<'_>, method: Method, levels: Option<&[Levels; 2]>, subframes: usize) -> Result<(MethodOutcome, [Levels; 2])> {
    let s = ctx.scenario;
    let n = s.antennas;
    let blocks: Vec<Block> = s
        .frame
        .blocks(s.n_blocks)
        .into_iter()
        .filter(|b| match b.kind {
            BlockKind::Preamble => true,
            BlockKind::Pilot { subframe } | BlockKind::Data { subframe, .. } => subframe < subframes,
        })
        .collect();
    let total = blocks.last().map_or(0, |b| b.end());
    let probe = Qam::new(4)?;
    let mut runs = Vec::with_capacity(2);
    let mut chosen: Vec<Levels> = Vec::with_capacity(2);
    let mut predicted = Vec::with_capacity(2);
    for dir in Direction::BOTH {
        let inputs = &ctx.inputs[dir.index()];
        let (design, stacked) = initial_design(ctx, method, inputs)?;
        let ns = design.streams();
        let pred: Vec<f64> = (0..ns).map(|m| to_db(sinr(&design, &stacked, s.sigma2(), m))).collect();
        let lv = match levels {
            Some(l) => l[dir.index()].clone(),
            None => adaptive_modulation(&pred, &ctx.table),
        };
        let qams = lv.iter().map(|l| l.map_or(Ok(probe), |e| Qam::new(e.order))).collect::<Result<Vec<_>>>()?;
        let pilot_system = method
            .tracks_per_antenna()
            .then(|| pilot_system(s.pilot_model, &design, &inputs.estimate, &(&design.precoder * set_matrix(&ctx.bank.pilots))));
        let weights = phase_weights(s, &design);
        let central = matches!(method, Method::Baseline1 | Method::Baseline2)
            .then(|| -> Result<CentralPhase> { Ok(CentralPhase { solver: SumPhaseSolver::new(n, n)?, vartheta: vec![0.0; n * n], phi: vec![0.0; 2 * n] }) })
            .transpose()?;
        let mut run = LinkRun {
            dir,
            n,
            inputs,
            view: ctx.real.frame_phases(dir),
            noise: &ctx.real.noise[dir.index()][..total],
            design: design.clone(),
            w_adj: Vec::new(),
            gains: Vec::new(),
            pilot_system,
            phase_weights: weights,
            active: lv.iter().map(Option::is_some).collect(),
            qams,
            x: Vec::with_capacity(total),
            s: Vec::with_capacity(total),
            words: Vec::with_capacity(total),
            y: Vec::with_capacity(total),
            tx_corr: Vec::with_capacity(blocks.len()),
            central,
            data_rng: stream_rng_indexed(ctx.real.seed, Stream::Data, dir.index() as u64),
            desired_power: vec![0.0; ns],
            error_power: vec![0.0; ns],
            bit_errors: 0,
            bits: 0,
            phase_err_sq: 0.0,
            phase_err_count: 0,
        };
        run.set_design(design, &stacked);
        runs.push(run);
        chosen.push(lv);
        predicted.push(pred);
    }
    // Site A receives the downlink, site B the uplink.
    let mut trackers = [SiteTracker::new(n, s.common_phase_side), SiteTracker::new(n, s.common_phase_side)];
    let rx_site = |dir: Direction| match dir {
        Direction::Uplink => 1,
        Direction::Downlink => 0,
    };
    let pilot_set = &ctx.bank.pilots;
    let pilot_u = interior(&set_matrix(pilot_set), s.window_w);
    for b in 0..=blocks.len() {
        if let Some(block) = blocks.get(b) {
            for dir in Direction::BOTH {
                let run = &mut runs[dir.index()];
                let tx_corr = match (&run.central, method.tracks_per_antenna()) {
                    (_, true) => trackers[1 - rx_site(dir)].corrections().tx,
                    (Some(c), false) if method == Method::Baseline1 => c.phi[n..].to_vec(),
                    _ => vec![0.0; n],
                };
                run.generate(block, ctx.bank, &tx_corr, method);
            }
        }
        if b == 0 {
            continue;
        }
        let block = blocks[b - 1];
        for dir in Direction::BOTH {
            let site = rx_site(dir);
            let run = &mut runs[dir.index()];
            run.ensure_received(block.end() + run.memory());
            let rx_corr: Vec<f64> = if method.tracks_per_antenna() {
                trackers[site].corrections().rx
            } else if method == Method::Baseline1 {
                run.central.as_ref().map(|c| c.phi[..n].to_vec()).unwrap_or_else(|| vec![0.0; n])
            } else {
                vec![0.0; n]
            };
            match block.kind {
                BlockKind::Preamble => {}
                BlockKind::Pilot { .. } => {
                    if method.tracks_per_antenna() {
                        let r = run.filter(&block, Some(&rx_corr));
                        let system = run.pilot_system.as_ref().expect("tracking methods build a pilot system");
                        let inc = estimate_increment_weighted(system, &r, &run.phase_weights)?;
                        trackers[site].book(&inc.delta, 1.0);
                    } else {
                        let y = interior(&run.raw_block(&block), s.window_w);
                        let inputs = run.inputs;
                        let current = single_tap_estimate(&y, &pilot_u)?;
                        let central = run.central.as_mut().expect("single-tap baselines hold central state");
                        central.vartheta = extract_sum_phases(&current, &inputs.pilot_reference, &central.vartheta);
                        central.phi = central.solver.solve(&central.vartheta);
                        if method == Method::Baseline2 {
                            let combined = rotate_links(&inputs.estimate, &central.vartheta);
                            let stacked = stack_channel(&combined, 0);
                            let design = memoryless_mmse(&stacked, s.power(), s.sigma2(), f64::from(ctx.table.cap_bits()))?;
                            run.set_design(design, &stacked);
                        }
                    }
                }
                BlockKind::Data { .. } => {
                    let mut r = run.filter(&block, Some(&rx_corr));
                    let mut rx_corr = rx_corr;
                    if method.tracks_per_antenna() && s.decision_feedback {
                        let symbols = if s.genie_feedback {
                            CMat::from_fn(r.nrows(), block.len, |m, c| run.s[block.start + c][m])
                        } else {
                            run.decide(&r)
                        };
                        let inc = estimate_increment_dfb(s.pilot_model, &run.design, &run.inputs.estimate, &symbols, &r, &run.phase_weights)?;
                        trackers[site].book(&inc.delta, s.alpha);
                        if s.refresh_receive {
                            rx_corr = trackers[site].corrections().rx;
                            r = run.filter(&block, Some(&rx_corr));
                        }
                    }
                    run.score(b - 1, &block, &r, &rx_corr);
                    run.detect(&block, &r);
                }
            }
        }
    }
    let directions = runs.iter().zip(predicted).zip(&chosen).map(|((run, p), lv)| run.outcome(p, lv)).collect();
    let chosen: [Levels; 2] = chosen.try_into().expect("two directions");
    Ok((MethodOutcome { method, directions }, chosen))
}

/// Runs one method for the whole frame, choosing modulation per the scenario's policy.
pub fn simulate_method(ctx: &TrialContext<'_>, method: Method) -> Result<MethodOutcome> {
    let s = ctx.scenario;
    let levels = match s.modulation_policy {
        ModulationPolicy::Predicted => None,
        ModulationPolicy::Measured => {
            let ns = s.antennas;
            let probe_levels: [Levels; 2] = [vec![None; ns], vec![None; ns]];
            let (probe, _) = run_pass(ctx, method, Some(&probe_levels), s.probe_subframes.clamp(1, s.frame.n_sf))?;
            let chosen: Vec<Levels> = probe.directions.iter().map(|d| adaptive_modulation(&d.measured_sinr_db, &ctx.table)).collect();
            Some(chosen.try_into().expect("two directions"))
        }
    };
    Ok(run_pass(ctx, method, levels.as_ref(), s.frame.n_sf)?.0)
}
