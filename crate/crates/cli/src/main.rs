//! `losmimo`: regenerates the simulator's figures and tables as CSV/JSON.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Parser;
use losmimo::experiments::{phase_sweep, precoder_grid, run_end_to_end, seq_design, timing_sweep};
use losmimo::link_sim::SequenceBank;
use losmimo::parallel::{with_workers, Execution};

use config::{read_config, resolve, Experiment, Preset, Settings};
use output::ArtifactDir;

#[derive(Debug, Parser)]
#[command(name = "losmimo", version, about = "LoS MIMO backhaul link-level experiments")]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    preset: Option<Preset>,
    /// Same as the positional preset.
    #[arg(long = "preset", value_enum, conflicts_with = "preset")]
    preset_flag: Option<Preset>,
    /// TOML file with `key = value` settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => read_config(path).map_err(Failure::Usage)?,
        None => Default::default(),
    };
    let preset = cli
        .preset
        .or(cli.preset_flag)
        .or(file.preset)
        .ok_or_else(|| Failure::Usage("no preset given (timing-sweep, precoder-grid, phn-sweep, end-to-end, seq-design)".into()))?;
    let settings = file.settings.overridden_by(&cli.settings);
    let experiment = resolve(preset, &settings).map_err(Failure::Usage)?;
    let out = settings.out.clone().unwrap_or_else(|| PathBuf::from("results").join(preset.name()));
    let workers = settings.workers.unwrap_or(0);
    with_workers(workers, || execute(&experiment, &out)).map_err(Failure::Runtime)
}

fn execute(experiment: &Experiment, out: &std::path::Path) -> Result<()> {
    let dir = ArtifactDir::create(out, experiment)?;
    let exec = Execution::Parallel;
    match experiment {
        Experiment::TimingSweep(c) => {
            let bank = SequenceBank::design(&c.scenario)?;
            let rows = timing_sweep(c, &bank, exec)?;
            let path = dir.csv("timing_sweep.csv", output::timing_records(&rows))?;
            println!("{:>8} {:>12} {:>12}", "xpd_db", "method", "rmse");
            for r in &rows {
                println!("{:>8.1} {:>12} {:>12.4e}", r.xpd_db, r.method.name(), r.rmse);
            }
            println!("wrote {}", path.display());
        }
        Experiment::PrecoderGrid(c) => {
            let bank = SequenceBank::design(&c.scenario)?;
            let rows = precoder_grid(c, &bank, exec)?;
            let path = dir.csv("precoder_grid.csv", output::grid_records(&rows))?;
            println!("{:>10} {:>10} {:>10} {:>10}", "tau_max", "sigma", "proposed", "svd");
            for r in &rows {
                println!("{:>10.4} {:>10.4} {:>10.2} {:>10.2}", r.tau_max, r.sigma_delta, r.proposed_rate, r.svd_rate);
            }
            let wins = rows.iter().filter(|r| r.proposed_rate >= r.svd_rate).count();
            println!("proposed >= svd at {wins}/{} points", rows.len());
            println!("wrote {}", path.display());
        }
        Experiment::PhnSweep { config, methods } => {
            let bank = SequenceBank::design(&config.scenario)?;
            let rows = phase_sweep(config, &bank, exec)?;
            let path = dir.csv("phn_sweep.csv", output::phase_records(&rows, methods))?;
            println!("{:>8} {:>10} {:>12}", "xpd_db", "method", "rmse_rad");
            for r in rows.iter().filter(|r| methods.contains(&r.method)) {
                println!("{:>8.1} {:>10} {:>12.4e}", r.xpd_db, r.method.name(), r.rmse);
            }
            println!("wrote {}", path.display());
        }
        Experiment::EndToEnd(c) => {
            let result = run_end_to_end(c, exec)?;
            let streams = dir.csv("end_to_end.csv", output::stream_records(&result))?;
            let summary = dir.json("summary.json", &output::summary_file(&result))?;
            println!("{:>10} {:>7} {:>10} {:>8} {:>10} {:>10}", "method", "trials", "ber", "se", "sinr_db", "phase_rad");
            for s in &result.summary {
                let sinr = s.mean_sinr_db.iter().sum::<f64>() / s.mean_sinr_db.len().max(1) as f64;
                println!(
                    "{:>10} {:>7} {:>10.3e} {:>8.2} {:>10.2} {:>10.4}",
                    s.method.name(),
                    s.trials,
                    s.ber,
                    s.spectral_efficiency,
                    sinr,
                    s.residual_phase_rmse
                );
            }
            println!("wrote {} and {}", streams.display(), summary.display());
            if !result.failures.is_empty() {
                for f in &result.failures {
                    eprintln!("trial {} (seed {}): {}", f.trial, f.seed, f.error);
                }
                bail!("{} of {} trials failed", result.failures.len(), c.trials);
            }
        }
        Experiment::SeqDesign(c) => {
            let result = seq_design(c)?;
            let seqs = dir.csv("sequences.csv", output::sequence_records(&result))?;
            let report = dir.json("isolation.json", &output::isolation_file(&result))?;
            println!("{:>12} {:>10} {:>10}", "family", "auto_db", "cross_db");
            for f in &result.isolation {
                println!("{:>12} {:>10.2} {:>10.2}", f.family, f.report.worst_auto_db, f.report.worst_cross_db);
            }
            println!("margin over classical families: {:.2} dB", result.margin_over_classical_db());
            println!("wrote {} and {}", seqs.display(), report.display());
        }
    }
    Ok(())
}
