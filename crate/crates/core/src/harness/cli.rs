//! `eelm` command line.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;

use super::files::{read_results_csv, render_report, write_dataset, write_results, RESULTS_CSV};
use super::{
    calibrate, generate_training_set, model_file_name, run_sweep, train_networks, EstimatorKind, EstimatorSet,
    Scenario, SweepConfig,
};
use crate::error::{Error, Result};
use crate::estimator::{read_model, write_model, ElmNetwork};

const DATASET_FILE: &str = "train.eeld";
const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Parser)]
#[command(name = "eelm", version, about = "RIS-assisted OFDM channel estimation experiments")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for models, datasets and results.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Comma-separated: ls_only, eelm, elm_no_std.
    #[arg(long, global = true, value_delimiter = ',')]
    estimators: Option<Vec<EstimatorKind>>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    /// Target EVM in percent.
    #[arg(long, global = true)]
    evm: Option<f64>,
    /// Channel length L.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Cyclic prefix length.
    #[arg(long, global = true)]
    cp: Option<usize>,
    /// Monte Carlo trials per SNR point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Training samples.
    #[arg(long = "train-samples", global = true)]
    train_samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a training set and fit the learned estimators.
    Train {
        /// Also write the training set to the output directory.
        #[arg(long)]
        save_dataset: bool,
    },
    /// Run the Monte Carlo NMSE sweep, training missing models first.
    Sweep,
    /// Find the amplifier drive for the target EVM.
    Calibrate,
    /// Print a summary table of a results CSV.
    Report {
        /// Defaults to `<out>/results.csv`.
        input: Option<PathBuf>,
    },
}

impl Overrides {
    fn config(&self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.estimators {
            cfg.estimators = v.clone();
        }
        if let Some(v) = &self.snr {
            cfg.snr_grid_db = v.clone();
        }
        if let Some(v) = self.evm {
            cfg.evm_target = v;
        }
        if let Some(v) = self.paths {
            cfg.n_paths = v;
        }
        if let Some(v) = self.cp {
            cfg.cp_len = v;
        }
        if let Some(v) = self.trials {
            cfg.n_trials = v;
        }
        if let Some(v) = self.train_samples {
            cfg.n_train = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn save_model(path: &Path, net: &ElmNetwork) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_model(BufWriter::new(file), net)
}

fn load_model(path: &Path) -> Result<ElmNetwork> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file))
}

fn write_timing(out: &Path, command: &str, start: Instant) -> Result<()> {
    let secs = start.elapsed().as_secs_f64();
    info!("{command} finished in {secs:.2} s");
    let path = out.join(TIMING_FILE);
    let text = format!("{{\n  \"command\": \"{command}\",\n  \"wall_seconds\": {secs}\n}}\n");
    std::fs::write(&path, text).map_err(|e| Error::io(path, e))
}

fn train(cfg: &SweepConfig, out: &Path, scenario: &Scenario, save_dataset: bool) -> Result<Vec<(EstimatorKind, ElmNetwork)>> {
    ensure_dir(out)?;
    info!("generating {} training samples", cfg.n_train);
    let set = generate_training_set(cfg, scenario)?;
    if save_dataset {
        let path = out.join(DATASET_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_dataset(BufWriter::new(file), cfg.seed, &set)?;
        info!("wrote {}", path.display());
    }
    let networks = train_networks(cfg, &set)?;
    for (kind, net) in &networks {
        let path = out.join(model_file_name(cfg, *kind));
        save_model(&path, net)?;
        info!("wrote {}", path.display());
    }
    Ok(networks)
}

fn sweep(cfg: &SweepConfig, out: &Path) -> Result<()> {
    let scenario = Scenario::new(cfg)?;
    let learned: Vec<EstimatorKind> = cfg.estimators.iter().copied().filter(|k| k.needs_network()).collect();
    let mut networks = Vec::new();
    let missing = learned
        .iter()
        .any(|k| !out.join(model_file_name(cfg, *k)).exists());
    if missing {
        info!("no stored model for this configuration; training first");
        networks = train(cfg, out, &scenario, false)?;
    } else {
        for &kind in &learned {
            let path = out.join(model_file_name(cfg, kind));
            info!("loading {}", path.display());
            networks.push((kind, load_model(&path)?));
        }
    }
    let estimators = EstimatorSet::new(&cfg.estimators, networks)?;
    info!(
        "sweeping {} SNR points x {} trials",
        cfg.snr_grid_db.len(),
        cfg.n_trials
    );
    let result = run_sweep(cfg, &scenario, &estimators)?;
    write_results(out, &result)?;
    print!("{}", render_report(&result.cells));
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let cfg = cli.overrides.config()?;
    let out = cli.overrides.out.as_path();
    match cli.command {
        Command::Train { save_dataset } => {
            let scenario = Scenario::new(&cfg)?;
            train(&cfg, out, &scenario, save_dataset)?;
            write_timing(out, "train", start)
        }
        Command::Sweep => {
            sweep(&cfg, out)?;
            write_timing(out, "sweep", start)
        }
        Command::Calibrate => {
            let cal = calibrate(&cfg, cfg.evm_target)?;
            println!(
                "target EVM {}%  drive scale {:.9}  achieved EVM {:.6}%",
                cal.target_evm, cal.drive_scale, cal.achieved_evm
            );
            Ok(())
        }
        Command::Report { input } => {
            let path = input.unwrap_or_else(|| out.join(RESULTS_CSV));
            print!("{}", render_report(&read_results_csv(&path)?));
            Ok(())
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 2 for usage or config errors, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
