//! Experiment orchestration: configuration, the end-to-end impaired link,
//! training-set generation, Monte Carlo sweeps and result aggregation.

pub mod cli;
mod files;

pub use files::{
    model_file_name, read_dataset, read_results_csv, render_report, write_dataset, write_results,
    DATASET_MAGIC, DATASET_VERSION,
};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::Mat;
use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_theta, composite_cir, ChannelRealization, RicianProfile, RisReflectionMatrix};
use crate::error::{Error, Result};
use crate::estimator::{
    ls_estimate, nmse, separate_links_with, Activation, ElmConfig, ElmNetwork, LsEstimate, OutputScaling,
    SeparatedCfrs, Standardization, TrainingSet,
};
use crate::impairments::{add_noise, calibrate_drive, evm_at_drive, time_varying_convolve, HpaModel, LinkNoise};
use crate::numerics::{domain, ComplexMatrix, SeededRng, C64};
use crate::waveform::{random_qpsk, zadoff_chu, Ofdm, PilotTone, SlotFrame};

/// Env var capping the worker count.
pub const THREADS_ENV: &str = "EELM_THREADS";

/// Number of QPSK OFDM blocks in the drive-calibration probe.
pub const PROBE_BLOCKS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    LsOnly,
    Eelm,
    ElmNoStd,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::LsOnly, EstimatorKind::Eelm, EstimatorKind::ElmNoStd];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::LsOnly => "ls_only",
            EstimatorKind::Eelm => "eelm",
            EstimatorKind::ElmNoStd => "elm_no_std",
        }
    }

    pub fn needs_network(self) -> bool {
        self != EstimatorKind::LsOnly
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown estimator '{s}' (expected ls_only, eelm or elm_no_std)")))
    }
}

/// Everything that defines an experiment. Loaded from TOML; every field
/// has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_subcarriers: usize,
    pub n_paths: usize,
    pub cp_len: usize,
    pub n_subsurfaces: usize,
    pub snr_grid_db: Vec<f64>,
    /// Percent.
    pub evm_target: f64,
    /// When false the amplifier is bypassed and `evm_target` is ignored.
    pub hpa_enabled: bool,
    pub n_trials: usize,
    pub n_train: usize,
    /// Training SNRs are drawn uniformly from `[lo, hi]` dB.
    pub train_snr_db: [f64; 2],
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub hidden_size: usize,
    pub activation: Activation,
    /// Standardization used by the `eelm` estimator; `elm_no_std` always
    /// uses none.
    pub eelm_standardization: Standardization,
    pub output_scaling: OutputScaling,
    pub ridge: f64,
    pub k_factor: f64,
    pub pdp_decay: f64,
    pub pilot_root: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 64,
            n_paths: 12,
            cp_len: 8,
            n_subsurfaces: 8,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            evm_target: 55.0,
            hpa_enabled: true,
            n_trials: 1000,
            n_train: 10_000,
            train_snr_db: [0.0, 30.0],
            seed: 0,
            estimators: EstimatorKind::ALL.to_vec(),
            hidden_size: 256,
            activation: Activation::Tanh,
            eelm_standardization: Standardization::Shared,
            output_scaling: OutputScaling::InputNorm,
            ridge: 0.0,
            k_factor: 2.0,
            pdp_decay: 0.2,
            pilot_root: 1,
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_subcarriers == 0 || self.n_paths == 0 || self.n_subsurfaces == 0 {
            return bad("n_subcarriers, n_paths and n_subsurfaces must be positive".into());
        }
        if self.cp_len >= self.n_subcarriers {
            return bad(format!("cp_len {} must be below n_subcarriers {}", self.cp_len, self.n_subcarriers));
        }
        if self.n_paths > self.n_subcarriers {
            return bad(format!("n_paths {} exceeds n_subcarriers {}", self.n_paths, self.n_subcarriers));
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.hpa_enabled && !(self.evm_target > 0.0 && self.evm_target < 100.0) {
            return bad(format!("evm_target {} must lie in (0, 100)", self.evm_target));
        }
        if self.snr_grid_db.iter().any(|s| s.is_nan()) {
            return bad("snr_grid_db contains NaN".into());
        }
        let [lo, hi] = self.train_snr_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("train_snr_db [{lo}, {hi}] is not a finite interval"));
        }
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive".into());
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be non-negative".into());
        }
        if !(self.k_factor >= 0.0) || !(self.pdp_decay >= 0.0) {
            return bad("k_factor and pdp_decay must be non-negative".into());
        }
        Ok(())
    }

    pub fn needs_networks(&self) -> bool {
        self.estimators.iter().any(|k| k.needs_network())
    }

    /// Network settings for one learned estimator.
    pub fn elm_config(&self, kind: EstimatorKind) -> ElmConfig {
        ElmConfig {
            hidden_size: self.hidden_size,
            activation: self.activation,
            standardization: match kind {
                EstimatorKind::ElmNoStd => Standardization::None,
                _ => self.eelm_standardization,
            },
            output_scaling: self.output_scaling,
            ridge: self.ridge,
            seed: self.seed,
        }
    }

    /// EVM written to result files; 0 when the amplifier is bypassed.
    pub fn effective_evm(&self) -> f64 {
        if self.hpa_enabled {
            self.evm_target
        } else {
            0.0
        }
    }
}

/// Drive-level search result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub target_evm: f64,
    pub drive_scale: f64,
    pub achieved_evm: f64,
}

/// QPSK OFDM probe used for drive calibration, drawn from the config seed.
pub fn calibration_probe(cfg: &SweepConfig, ofdm: &Ofdm) -> Result<Vec<C64>> {
    let mut rng = SeededRng::derive(cfg.seed, domain::PROBE, 0);
    let mut probe = Vec::with_capacity(PROBE_BLOCKS * ofdm.block_len());
    for _ in 0..PROBE_BLOCKS {
        probe.extend(ofdm.modulate(&random_qpsk(&mut rng, ofdm.n()))?.time_samples);
    }
    Ok(probe)
}

/// Finds the drive scale for `target_evm` on the config's probe signal.
pub fn calibrate(cfg: &SweepConfig, target_evm: f64) -> Result<Calibration> {
    let ofdm = Ofdm::new(cfg.n_subcarriers, cfg.cp_len)?;
    let probe = calibration_probe(cfg, &ofdm)?;
    let model = HpaModel::default();
    let drive_scale = calibrate_drive(&model, target_evm, &probe)?;
    Ok(Calibration {
        target_evm,
        drive_scale,
        achieved_evm: evm_at_drive(&model, drive_scale, &probe)?,
    })
}

/// One received pilot observation together with the ground truth.
#[derive(Debug, Clone)]
pub struct Observation {
    pub ls: LsEstimate,
    pub separated: SeparatedCfrs,
    /// True per-link CFRs, `N x (M+1)`.
    pub truth: ComplexMatrix,
}

/// Fixed per-experiment state: modem, pilot, reflection patterns and the
/// calibrated amplifier.
#[derive(Debug, Clone)]
pub struct Scenario {
    n_paths: usize,
    profile: RicianProfile,
    ofdm: Ofdm,
    pilot: PilotTone,
    theta: RisReflectionMatrix,
    theta_inverse: ComplexMatrix,
    hpa: Option<HpaModel>,
    calibration: Option<Calibration>,
}

impl Scenario {
    pub fn new(cfg: &SweepConfig) -> Result<Self> {
        cfg.validate()?;
        let ofdm = Ofdm::new(cfg.n_subcarriers, cfg.cp_len)?;
        let pilot = zadoff_chu(cfg.n_subcarriers, cfg.pilot_root)?;
        let theta = build_theta(cfg.n_subsurfaces)?;
        let theta_inverse = theta.inverse()?;
        let (hpa, calibration) = if cfg.hpa_enabled {
            let cal = calibrate(cfg, cfg.evm_target)?;
            (Some(HpaModel::default().with_drive(cal.drive_scale)), Some(cal))
        } else {
            (None, None)
        };
        Ok(Self {
            n_paths: cfg.n_paths,
            profile: RicianProfile {
                k_factor: cfg.k_factor,
                pdp_decay: cfg.pdp_decay,
            },
            ofdm,
            pilot,
            theta,
            theta_inverse,
            hpa,
            calibration,
        })
    }

    pub fn calibration(&self) -> Option<Calibration> {
        self.calibration
    }

    pub fn n_subcarriers(&self) -> usize {
        self.ofdm.n()
    }

    pub fn n_links(&self) -> usize {
        self.theta.n_slots()
    }

    /// Runs one coherence interval: draws the channel, sends `M+1` slots
    /// (pilot then data) through the amplifier, the slot-varying composite
    /// channel and AWGN, then estimates and separates the links.
    ///
    /// Draw order from `rng`: channel, data symbols, noise. The noise draw
    /// does not depend on `snr_db`, so trials sharing a stream see the
    /// same channel and the same normalized noise at every SNR.
    pub fn simulate(&self, rng: &mut SeededRng, snr_db: f64) -> Result<Observation> {
        let m = self.theta.n_subsurfaces();
        let real = ChannelRealization::generate(rng, self.n_paths, m, self.profile)?;
        let slots = self.theta.n_slots();
        let mut segments = Vec::with_capacity(slots);
        let mut cirs = Vec::with_capacity(slots);
        for (s, phases) in self.theta.phase_vectors.iter().enumerate() {
            let frame = SlotFrame::new(&self.ofdm, &self.pilot, rng, s + 1)?;
            let samples = frame.samples();
            segments.push(match &self.hpa {
                Some(hpa) => hpa.transmit(&samples),
                None => samples,
            });
            cirs.push(composite_cir(&real, phases)?);
        }
        let slot_len = segments[0].len();
        let mut rx = time_varying_convolve(&segments, &cirs)?;
        let noise = if snr_db == f64::INFINITY {
            LinkNoise::noiseless()
        } else {
            LinkNoise::for_signal(snr_db, &rx)
        };
        add_noise(&mut rx, noise.variance, rng)?;

        let n = self.ofdm.n();
        let mut pilots_freq = ComplexMatrix::zeros(n, slots);
        for s in 0..slots {
            let y = self.ofdm.demodulate(&rx[s * slot_len..])?;
            for (k, v) in y.into_iter().enumerate() {
                pilots_freq[(k, s)] = v;
            }
        }
        let ls = ls_estimate(&pilots_freq, &self.pilot.symbols)?;
        let separated = separate_links_with(&ls, &self.theta_inverse)?;
        let truth = real.link_cfrs(n)?;
        Ok(Observation { ls, separated, truth })
    }
}

/// Runs `f` on a pool capped by [`THREADS_ENV`], or on the global pool.
pub fn with_worker_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    match cap {
        Some(threads) if threads > 0 => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                warn!("could not build a {threads}-thread pool ({e}); using the default pool");
                f()
            }
        },
        _ => f(),
    }
}

/// Draws `cfg.n_train` samples, each at an SNR uniform over
/// `cfg.train_snr_db`, with sample `t` on its own RNG stream.
pub fn generate_training_set(cfg: &SweepConfig, scenario: &Scenario) -> Result<TrainingSet> {
    let [lo, hi] = cfg.train_snr_db;
    let samples = with_worker_pool(|| {
        (0..cfg.n_train)
            .into_par_iter()
            .map(|t| {
                let mut rng = SeededRng::derive(cfg.seed, domain::TRAINING, t as u64);
                let snr: f64 = if lo == hi { lo } else { rng.random_range(lo..=hi) };
                let obs = scenario.simulate(&mut rng, snr)?;
                Ok((obs.separated.links, obs.truth, snr))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut set = TrainingSet::new(scenario.n_subcarriers(), scenario.n_links());
    for (input, label, snr) in samples {
        set.push(input, label, snr)?;
    }
    Ok(set)
}

/// Trains one network per learned estimator in `cfg.estimators`.
/// All networks share the same frozen input layer.
pub fn train_networks(cfg: &SweepConfig, set: &TrainingSet) -> Result<Vec<(EstimatorKind, ElmNetwork)>> {
    let mut out = Vec::new();
    for &kind in &cfg.estimators {
        if !kind.needs_network() || out.iter().any(|(k, _)| *k == kind) {
            continue;
        }
        let net = ElmNetwork::new(cfg.elm_config(kind), 2 * set.n_subcarriers())?;
        info!("training {kind} on {} samples", set.len());
        out.push((kind, net.train(set)?));
    }
    Ok(out)
}

/// Estimators evaluated in every trial.
#[derive(Debug, Clone)]
pub struct EstimatorSet {
    entries: Vec<(EstimatorKind, Option<ElmNetwork>)>,
}

impl EstimatorSet {
    /// Pairs each kind in `kinds` with its trained network.
    pub fn new(kinds: &[EstimatorKind], networks: Vec<(EstimatorKind, ElmNetwork)>) -> Result<Self> {
        let mut entries = Vec::new();
        for &kind in kinds {
            if entries.iter().any(|(k, _)| *k == kind) {
                continue;
            }
            let net = if kind.needs_network() {
                let net = networks
                    .iter()
                    .find(|(k, _)| *k == kind)
                    .map(|(_, n)| n.clone())
                    .ok_or_else(|| Error::NotReady(format!("no trained network for {kind}")))?;
                Some(net)
            } else {
                None
            };
            entries.push((kind, net));
        }
        Ok(Self { entries })
    }

    pub fn ls_only() -> Self {
        Self {
            entries: vec![(EstimatorKind::LsOnly, None)],
        }
    }

    pub fn kinds(&self) -> Vec<EstimatorKind> {
        self.entries.iter().map(|(k, _)| *k).collect()
    }

    pub fn network(&self, kind: EstimatorKind) -> Option<&ElmNetwork> {
        self.entries.iter().find(|(k, _)| *k == kind).and_then(|(_, n)| n.as_ref())
    }

    fn estimate(&self, obs: &Observation) -> Result<Vec<f64>> {
        self.entries
            .iter()
            .map(|(_, net)| {
                let est = match net {
                    None => obs.separated.links.clone(),
                    Some(net) => net.infer(&obs.separated)?,
                };
                nmse(&est, &obs.truth)
            })
            .collect()
    }
}

/// NMSE of every estimator in one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub trial: u64,
    pub nmse: Vec<(EstimatorKind, f64)>,
}

impl TrialRecord {
    pub fn get(&self, kind: EstimatorKind) -> Option<f64> {
        self.nmse.iter().find(|(k, _)| *k == kind).map(|(_, v)| *v)
    }
}

/// Simulates trial `trial` at `snr_db`. The RNG stream is the trial index,
/// so the channel draw is shared across SNR points and estimators.
pub fn run_trial(
    scenario: &Scenario,
    estimators: &EstimatorSet,
    seed: u64,
    trial: u64,
    snr_db: f64,
) -> Result<TrialRecord> {
    let attach = |e: Error| Error::Trial {
        trial,
        snr_db,
        source: Box::new(e),
    };
    let mut rng = SeededRng::derive(seed, domain::TRIAL, trial);
    let obs = scenario.simulate(&mut rng, snr_db).map_err(attach)?;
    let values = estimators.estimate(&obs).map_err(attach)?;
    Ok(TrialRecord {
        snr_db,
        trial,
        nmse: estimators.kinds().into_iter().zip(values).collect(),
    })
}

/// Aggregate over the trials of one `(snr, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub snr_db: f64,
    pub estimator: EstimatorKind,
    pub evm: f64,
    #[serde(rename = "L")]
    pub n_paths: usize,
    #[serde(rename = "L_CP")]
    pub cp_len: usize,
    pub mean_nmse: f64,
    pub stderr: f64,
    pub n_trials: usize,
}

/// Sample mean and standard error (`n - 1` denominator; 0 for one value).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub calibration: Option<Calibration>,
    pub cells: Vec<CellSummary>,
    /// Every trial, ordered by SNR then trial index.
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn cell(&self, snr_db: f64, kind: EstimatorKind) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.snr_db == snr_db && c.estimator == kind)
    }

    /// Per-trial NMSE values of one cell in trial order.
    pub fn values(&self, snr_db: f64, kind: EstimatorKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.snr_db == snr_db)
            .filter_map(|r| r.get(kind))
            .collect()
    }
}

pub fn aggregate(cfg: &SweepConfig, estimators: &[EstimatorKind], records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &snr in &cfg.snr_grid_db {
        for &kind in estimators {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.snr_db == snr)
                .filter_map(|r| r.get(kind))
                .collect();
            let (mean_nmse, stderr) = mean_and_stderr(&values);
            cells.push(CellSummary {
                snr_db: snr,
                estimator: kind,
                evm: cfg.effective_evm(),
                n_paths: cfg.n_paths,
                cp_len: cfg.cp_len,
                mean_nmse,
                stderr,
                n_trials: values.len(),
            });
        }
    }
    cells
}

/// Runs every `(snr, trial)` cell and aggregates. Results do not depend on
/// the worker count.
pub fn run_sweep(cfg: &SweepConfig, scenario: &Scenario, estimators: &EstimatorSet) -> Result<SweepResult> {
    let trials = cfg.n_trials as u64;
    let cells: Vec<(f64, u64)> = cfg
        .snr_grid_db
        .iter()
        .flat_map(|&snr| (0..trials).map(move |t| (snr, t)))
        .collect();
    let records = with_worker_pool(|| {
        cells
            .par_iter()
            .map(|&(snr, t)| run_trial(scenario, estimators, cfg.seed, t, snr))
            .collect::<Result<Vec<_>>>()
    })?;
    let kinds = estimators.kinds();
    Ok(SweepResult {
        config: cfg.clone(),
        calibration: scenario.calibration(),
        cells: aggregate(cfg, &kinds, &records),
        records,
    })
}

/// Builds the scenario, trains any needed networks and runs the sweep.
pub fn train_and_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let scenario = Scenario::new(cfg)?;
    let networks = if cfg.needs_networks() {
        let set = generate_training_set(cfg, &scenario)?;
        train_networks(cfg, &set)?
    } else {
        Vec::new()
    };
    let estimators = EstimatorSet::new(&cfg.estimators, networks)?;
    run_sweep(cfg, &scenario, &estimators)
}

/// Sample-major `N x (M+1)` matrix from a flat slice, column-major.
pub(crate) fn matrix_from_columns(n: usize, links: usize, v: &[C64]) -> ComplexMatrix {
    Mat::from_fn(n, links, |i, j| v[j * n + i])
}
