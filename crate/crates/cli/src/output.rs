//! Artifact writers. Every file starts with the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use losmimo::experiments::{EndToEndResult, PhaseMethod, PhaseRow, PrecoderGridRow, SeqDesignResult, TimingRow};
use losmimo::link_sim::Direction;
use serde::Serialize;

use crate::config::Experiment;

pub struct ArtifactDir {
    root: PathBuf,
    config_json: String,
}

impl ArtifactDir {
    pub fn create(root: &Path, experiment: &Experiment) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let config_json = serde_json::to_string(experiment)?;
        Ok(Self { root: root.to_path_buf(), config_json })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// CSV with a leading `# config: {...}` comment line.
    pub fn csv<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<PathBuf> {
        let mut buf = format!("# config: {}\n", self.config_json).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Pretty JSON object `{ "config": ..., <body> }`.
    pub fn json<B: Serialize>(&self, name: &str, body: &B) -> Result<PathBuf> {
        let config: serde_json::Value = serde_json::from_str(&self.config_json)?;
        let mut value = serde_json::to_value(body)?;
        match value.as_object_mut() {
            Some(map) => {
                map.insert("config".into(), config);
            }
            None => value = serde_json::json!({ "config": config, "result": value }),
        }
        let path = self.path(name);
        fs::write(&path, serde_json::to_string_pretty(&value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    xpd_db: f64,
    method: &'a str,
    rmse: f64,
}

pub fn timing_records(rows: &[TimingRow]) -> impl Iterator<Item = impl Serialize + '_> {
    rows.iter().map(|r| TimingRecord { xpd_db: r.xpd_db, method: r.method.name(), rmse: r.rmse })
}

#[derive(Serialize)]
struct GridRecord {
    tau_max_symbols: f64,
    sigma_delta: f64,
    proposed_sum_rate: f64,
    svd_sum_rate: f64,
}

pub fn grid_records(rows: &[PrecoderGridRow]) -> impl Iterator<Item = impl Serialize + '_> {
    rows.iter().map(|r| GridRecord { tau_max_symbols: r.tau_max, sigma_delta: r.sigma_delta, proposed_sum_rate: r.proposed_rate, svd_sum_rate: r.svd_rate })
}

#[derive(Serialize)]
struct PhaseRecord<'a> {
    xpd_db: f64,
    method: &'a str,
    rmse_rad: f64,
}

pub fn phase_records<'a>(rows: &'a [PhaseRow], methods: &'a [PhaseMethod]) -> impl Iterator<Item = impl Serialize + 'a> {
    rows.iter().filter(|r| methods.contains(&r.method)).map(|r| PhaseRecord { xpd_db: r.xpd_db, method: r.method.name(), rmse_rad: r.rmse })
}

#[derive(Serialize)]
struct StreamRecord {
    trial: usize,
    method: &'static str,
    direction: &'static str,
    stream: usize,
    sinr_db: f64,
    predicted_sinr_db: f64,
    qam: u32,
    ber: f64,
    se: f64,
}

fn direction_name(d: Direction) -> &'static str {
    match d {
        Direction::Uplink => "uplink",
        Direction::Downlink => "downlink",
    }
}

pub fn stream_records(result: &EndToEndResult) -> Vec<impl Serialize> {
    let mut out = Vec::new();
    for report in &result.reports {
        for m in &report.methods {
            for d in &m.directions {
                for (stream, (&sinr, &pred)) in d.measured_sinr_db.iter().zip(&d.predicted_sinr_db).enumerate() {
                    out.push(StreamRecord {
                        trial: report.trial,
                        method: m.method.name(),
                        direction: direction_name(d.direction),
                        stream,
                        sinr_db: sinr,
                        predicted_sinr_db: pred,
                        qam: d.qam_order[stream],
                        ber: d.ber(),
                        se: d.spectral_efficiency,
                    });
                }
            }
        }
    }
    out
}

#[derive(Serialize)]
pub struct SummaryRecord {
    pub method: &'static str,
    pub trials: usize,
    pub ber: f64,
    pub spectral_efficiency: f64,
    pub mean_sinr_db: Vec<f64>,
    pub residual_phase_rmse_rad: f64,
}

#[derive(Serialize)]
pub struct SummaryFile<'a> {
    pub summary: Vec<SummaryRecord>,
    pub timing_rmse: Vec<[f64; 2]>,
    pub failures: &'a [losmimo::experiments::TrialFailure],
}

pub fn summary_file(result: &EndToEndResult) -> SummaryFile<'_> {
    SummaryFile {
        summary: result
            .summary
            .iter()
            .map(|s| SummaryRecord {
                method: s.method.name(),
                trials: s.trials,
                ber: s.ber,
                spectral_efficiency: s.spectral_efficiency,
                mean_sinr_db: s.mean_sinr_db.clone(),
                residual_phase_rmse_rad: s.residual_phase_rmse,
            })
            .collect(),
        timing_rmse: result.reports.iter().map(|r| r.timing_rmse).collect(),
        failures: &result.failures,
    }
}

#[derive(Serialize)]
struct SequenceRecord {
    symbol: usize,
    antenna: usize,
    re: f64,
    im: f64,
}

pub fn sequence_records(result: &SeqDesignResult) -> Vec<impl Serialize> {
    let set = &result.designed;
    (0..set.len())
        .flat_map(|k| set.sequences.iter().enumerate().map(move |(j, s)| SequenceRecord { symbol: k, antenna: j, re: s[k].re, im: s[k].im }))
        .collect()
}

#[derive(Serialize)]
struct FamilyRecord<'a> {
    family: &'a str,
    lag_window: usize,
    worst_auto_db: f64,
    worst_cross_db: f64,
    worst_db: f64,
}

#[derive(Serialize)]
pub struct IsolationFile<'a> {
    families: Vec<FamilyRecord<'a>>,
    margin_over_classical_db: f64,
    design_iterations: usize,
    final_objective: f64,
}

pub fn isolation_file(result: &SeqDesignResult) -> IsolationFile<'_> {
    IsolationFile {
        families: result
            .isolation
            .iter()
            .map(|f| FamilyRecord {
                family: &f.family,
                lag_window: f.report.window,
                worst_auto_db: f.report.worst_auto_db,
                worst_cross_db: f.report.worst_cross_db,
                worst_db: f.report.worst_db(),
            })
            .collect(),
        margin_over_classical_db: result.margin_over_classical_db(),
        design_iterations: result.designed.design_objective_history.len().saturating_sub(1),
        final_objective: result.designed.objective(),
    }
}
