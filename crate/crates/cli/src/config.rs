//! Parameter resolution: preset defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use losmimo::experiments::{EndToEndConfig, PhaseMethod, PhaseSweepConfig, PrecoderGridConfig, SeqDesignConfig, TimingSweepConfig};
use losmimo::link_sim::{Method, ModulationPolicy, Scenario};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TimingSweep,
    PrecoderGrid,
    PhnSweep,
    EndToEnd,
    SeqDesign,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::TimingSweep => "timing-sweep",
            Preset::PrecoderGrid => "precoder-grid",
            Preset::PhnSweep => "phn-sweep",
            Preset::EndToEnd => "end-to-end",
            Preset::SeqDesign => "seq-design",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    Predicted,
    Measured,
}

impl From<PolicyArg> for ModulationPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Predicted => ModulationPolicy::Predicted,
            PolicyArg::Measured => ModulationPolicy::Measured,
        }
    }
}

/// Settings accepted both as flags and as config-file keys.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Monte-Carlo trials (per grid point for sweeps).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all available).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods (end-to-end: proposed, baseline1..3; phn-sweep: proposed, baseline1, baseline2).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Modulation-level selection for end-to-end runs.
    #[arg(long, value_enum)]
    pub modulation_policy: Option<PolicyArg>,
    /// Cross-polar discrimination (dB); pins sweeps to this single value.
    #[arg(long)]
    pub xpd_db: Option<f64>,
    /// Reflected-path notch depth (dB).
    #[arg(long)]
    pub rho_db: Option<f64>,
    /// Receive SNR (dB).
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Maximum timing offset (symbols); pins the precoder grid's offset axis.
    #[arg(long)]
    pub tau_max_symbols: Option<f64>,
    /// Phase-noise increment variance per symbol (rad²); pins the precoder grid's phase axis.
    #[arg(long)]
    pub sigma_delta2: Option<f64>,
    /// Decision-feedback smoothing factor.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Antennas per site.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub antennas: Option<usize>,
    /// Preamble length.
    #[arg(long = "Lt")]
    #[serde(rename = "Lt")]
    pub l_t: Option<usize>,
    /// Pilot length.
    #[arg(long = "Lp")]
    #[serde(rename = "Lp")]
    pub l_p: Option<usize>,
    /// Data symbols per subframe.
    #[arg(long = "Ld")]
    #[serde(rename = "Ld")]
    pub l_d: Option<usize>,
    /// Subframes per frame.
    #[arg(long = "Nsf")]
    #[serde(rename = "Nsf")]
    pub n_sf: Option<usize>,
    /// Channel tap half-width.
    #[arg(long = "W")]
    #[serde(rename = "W")]
    pub window_w: Option<usize>,
    /// Decorrelator memory.
    #[arg(long = "D")]
    #[serde(rename = "D")]
    pub memory_d: Option<usize>,
    /// Samples per symbol.
    #[arg(long = "Q")]
    #[serde(rename = "Q")]
    pub oversampling_q: Option<usize>,
}

/// Config file contents: an optional preset plus any [`Settings`] key.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub preset: Option<Preset>,
    #[serde(flatten)]
    pub settings: Settings,
}

pub fn read_config(path: &Path) -> Result<FileConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
}

macro_rules! merge {
    ($base:expr, $over:expr, $($field:ident),+) => {
        $( if $over.$field.is_some() { $base.$field = $over.$field.clone(); } )+
    };
}

impl Settings {
    /// `self` with every field set in `over` replaced.
    pub fn overridden_by(mut self, over: &Settings) -> Settings {
        merge!(
            self, over, trials, seed, workers, out, methods, modulation_policy, xpd_db, rho_db, snr_db, tau_max_symbols, sigma_delta2, alpha,
            antennas, l_t, l_p, l_d, n_sf, window_w, memory_d, oversampling_q
        );
        self
    }

    fn apply(&self, s: &mut Scenario) -> Result<(), String> {
        if let Some(v) = self.xpd_db {
            s.xpd_db = v;
        }
        if let Some(v) = self.rho_db {
            s.rho_db = v;
        }
        if let Some(v) = self.snr_db {
            s.frame.snr_db = v;
        }
        if let Some(v) = self.tau_max_symbols {
            s.tau_max = v;
        }
        if let Some(v) = self.sigma_delta2 {
            s.sigma_delta2 = v;
        }
        if let Some(v) = self.alpha {
            s.alpha = v;
        }
        if let Some(v) = self.antennas {
            s.antennas = v;
        }
        if let Some(v) = self.l_t {
            s.frame.l_t = v;
        }
        if let Some(v) = self.l_p {
            s.frame.l_p = v;
        }
        if let Some(v) = self.l_d {
            s.frame.l_d = v;
        }
        if let Some(v) = self.n_sf {
            s.frame.n_sf = v;
        }
        if let Some(v) = self.window_w {
            s.window_w = v;
        }
        if let Some(v) = self.memory_d {
            s.memory_d = v;
        }
        if let Some(v) = self.oversampling_q {
            s.oversampling_q = v;
        }
        if let Some(p) = self.modulation_policy {
            s.modulation_policy = p.into();
        }
        s.validate().map_err(|e| e.to_string())
    }

    fn scenario(&self) -> Result<Scenario, String> {
        let mut s = Scenario::default();
        self.apply(&mut s)?;
        Ok(s)
    }

    fn trials_or(&self, default: usize) -> Result<usize, String> {
        match self.trials {
            Some(0) => Err("--trials must be positive".into()),
            Some(t) => Ok(t),
            None => Ok(default),
        }
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Experiment {
    TimingSweep(TimingSweepConfig),
    PrecoderGrid(PrecoderGridConfig),
    PhnSweep { config: PhaseSweepConfig, methods: Vec<PhaseMethod> },
    EndToEnd(EndToEndConfig),
    SeqDesign(SeqDesignConfig),
}

fn parse_methods<T: Copy>(names: &Option<Vec<String>>, all: &[T], name: impl Fn(T) -> &'static str) -> Result<Vec<T>, String> {
    let Some(names) = names else { return Ok(all.to_vec()) };
    let mut out = Vec::new();
    for n in names {
        let m = all.iter().copied().find(|&m| name(m) == n.trim()).ok_or_else(|| {
            let known: Vec<&str> = all.iter().map(|&m| name(m)).collect();
            format!("unknown method '{n}' (expected one of {})", known.join(", "))
        })?;
        out.push(m);
    }
    if out.is_empty() {
        return Err("--methods is empty".into());
    }
    Ok(out)
}

pub fn resolve(preset: Preset, settings: &Settings) -> Result<Experiment, String> {
    let scenario = settings.scenario()?;
    if settings.methods.is_some() && !matches!(preset, Preset::PhnSweep | Preset::EndToEnd) {
        return Err(format!("--methods does not apply to {}", preset.name()));
    }
    Ok(match preset {
        Preset::TimingSweep => {
            let d = TimingSweepConfig::default();
            TimingSweepConfig {
                xpd_grid_db: settings.xpd_db.map_or(d.xpd_grid_db, |x| vec![x]),
                trials: settings.trials_or(d.trials)?,
                seed: settings.seed.unwrap_or(d.seed),
                scenario,
            }
            .into()
        }
        Preset::PrecoderGrid => {
            let d = PrecoderGridConfig::default();
            PrecoderGridConfig {
                tau_grid: settings.tau_max_symbols.map_or(d.tau_grid, |t| vec![t]),
                sigma_grid: settings.sigma_delta2.map_or(d.sigma_grid, |v| vec![v.sqrt()]),
                trials: settings.trials_or(d.trials)?,
                seed: settings.seed.unwrap_or(d.seed),
                scenario,
            }
            .into()
        }
        Preset::PhnSweep => {
            let d = PhaseSweepConfig::default();
            let methods = parse_methods(&settings.methods, &PhaseMethod::ALL, PhaseMethod::name)?;
            let config = PhaseSweepConfig {
                xpd_grid_db: settings.xpd_db.map_or(d.xpd_grid_db, |x| vec![x]),
                trials: settings.trials_or(d.trials)?,
                seed: settings.seed.unwrap_or(d.seed),
                scenario,
                ..d
            };
            Experiment::PhnSweep { config, methods }
        }
        Preset::EndToEnd => {
            let d = EndToEndConfig::default();
            EndToEndConfig {
                methods: parse_methods(&settings.methods, &Method::ALL, Method::name)?,
                trials: settings.trials_or(d.trials)?,
                seed: settings.seed.unwrap_or(d.seed),
                scenario,
            }
            .into()
        }
        Preset::SeqDesign => {
            let d = SeqDesignConfig::default();
            SeqDesignConfig {
                antennas: scenario.antennas,
                length: scenario.frame.l_t,
                tau_max: scenario.tau_max,
                seed: settings.seed.unwrap_or(d.seed),
                ..d
            }
            .into()
        }
    })
}

impl From<TimingSweepConfig> for Experiment {
    fn from(c: TimingSweepConfig) -> Self {
        Experiment::TimingSweep(c)
    }
}

impl From<PrecoderGridConfig> for Experiment {
    fn from(c: PrecoderGridConfig) -> Self {
        Experiment::PrecoderGrid(c)
    }
}

impl From<EndToEndConfig> for Experiment {
    fn from(c: EndToEndConfig) -> Self {
        Experiment::EndToEnd(c)
    }
}

impl From<SeqDesignConfig> for Experiment {
    fn from(c: SeqDesignConfig) -> Self {
        Experiment::SeqDesign(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_layers_win() {
        let file = Settings { trials: Some(3), seed: Some(9), ..Default::default() };
        let flags = Settings { trials: Some(5), ..Default::default() };
        let merged = file.overridden_by(&flags);
        assert_eq!(merged.trials, Some(5));
        assert_eq!(merged.seed, Some(9));
    }

    #[test]
    fn config_file_uses_flag_spellings() {
        let cfg: FileConfig = toml::from_str("preset = \"phn-sweep\"\nNsf = 4\nxpd-db = 10.0\nmethods = [\"proposed\"]\n").unwrap();
        assert_eq!(cfg.preset, Some(Preset::PhnSweep));
        assert_eq!(cfg.settings.n_sf, Some(4));
        let Experiment::PhnSweep { config, methods } = resolve(Preset::PhnSweep, &cfg.settings).unwrap() else { panic!("wrong preset") };
        assert_eq!(config.xpd_grid_db, vec![10.0]);
        assert_eq!(config.scenario.frame.n_sf, 4);
        assert_eq!(methods, vec![PhaseMethod::Proposed]);
    }

    #[test]
    fn rejects_unknown_methods_and_invalid_scenarios() {
        let bad_method = Settings { methods: Some(vec!["nope".into()]), ..Default::default() };
        assert!(resolve(Preset::EndToEnd, &bad_method).unwrap_err().contains("nope"));
        let bad_alpha = Settings { alpha: Some(1.5), ..Default::default() };
        assert!(resolve(Preset::EndToEnd, &bad_alpha).is_err());
    }

    #[test]
    fn phase_axis_is_given_as_variance() {
        let s = Settings { sigma_delta2: Some(1e-4), ..Default::default() };
        let Experiment::PrecoderGrid(c) = resolve(Preset::PrecoderGrid, &s).unwrap() else { panic!("wrong preset") };
        assert_eq!(c.sigma_grid, vec![1e-2]);
    }
}
