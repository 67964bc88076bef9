//! Command-line front end: `generate`, `train`, `sweep` and `compare`.
//!
//! Settings resolve as flags first, then the `--config` TOML file, then
//! defaults. The seed additionally falls back to `ARDLSTM_SEED` when
//! neither a flag nor the file sets it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ard::Bounds;
use crate::ard_lstm::{ArdLstmConfig, ArdLstmModel, ForwardOptions, Propagation, SparsityReport};
use crate::checkpoint::{self, Checkpoint, SavedModel};
use crate::data::{
    default_designs, generate_bending_like, load_csv, read_csv_header, BendingSurrogateConfig, CsvSchema,
    SequenceDataset,
};
use crate::error::{Error, Result};
use crate::eval::{
    linspace, propagation_agreement, r_squared, uncertainty_sweep, uncertainty_sweep_against, EiReference,
    ImprovementSense, SweepOptions,
};
use crate::lstm::{BaselineConfig, BaselineModel, Gate};
use crate::numerics::{mix_seed, Matrix};

pub const METRICS_VERSION: u32 = 1;
/// Metrics fields that depend on the host and are excluded from
/// reproducibility comparisons.
pub const WALL_TIME_FIELDS: [&str; 5] = [
    "wall_time_s",
    "time_per_epoch_s",
    "sampled_time_per_epoch_s",
    "mean_based_time_per_epoch_s",
    "time_ratio",
];
pub const DEFAULT_STEPS: usize = 41;

#[derive(Parser, Debug)]
#[command(name = "ardlstm", version, about = "Sparse Bayesian LSTM surrogates with relevance determination")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the synthetic bending-like dataset as CSV.
    Generate(GenerateArgs),
    /// Train a baseline or ARD-LSTM model.
    Train(RunArgs),
    /// Predictive spread and expected improvement over a design grid.
    Sweep(SweepArgs),
    /// Timing and agreement of sampled and mean-based propagation.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Lstm,
    ArdLstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sampled,
    MeanBased,
}

impl From<Mode> for Propagation {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sampled => Propagation::Sampled,
            Mode::MeanBased => Propagation::MeanBased,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of designs spread over the reference positions.
    #[arg(long)]
    pub designs: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// One width, or a comma-separated list that trains one model per width.
    #[arg(long, value_delimiter = ',')]
    pub units: Vec<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset CSV; the synthetic dataset is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    pub share_weights: Option<bool>,
    #[arg(long, value_name = "BOOL", num_args = 0..=1, default_missing_value = "true")]
    pub share_output: Option<bool>,
    /// Leading columns of the CSV (after `design_id` and `t`) that are inputs.
    #[arg(long)]
    pub features: Option<usize>,
    /// Designs of the generated dataset.
    #[arg(long)]
    pub designs: Option<usize>,
    /// Noise seed of the generated dataset.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Design value left out of training.
    #[arg(long, allow_hyphen_values = true)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub beta_min: Option<f64>,
    #[arg(long)]
    pub beta_max: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SweepArgs {
    /// Defaults to `<out>/checkpoint.bin`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub reference: Option<Reference>,
    #[arg(long)]
    pub minimize: bool,
    /// EI against the predictive mean of this checkpoint (for instance a
    /// model trained on all designs) instead of `--reference`.
    #[arg(long)]
    pub reference_checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Reference {
    Interpolated,
    BestObserved,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Compare on a trained model instead of training one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Training epochs timed per propagation mode.
    #[arg(long, default_value_t = 5)]
    pub timing_epochs: usize,
    /// Samples of each sampled reference pass.
    #[arg(long, default_value_t = 1000)]
    pub reference_samples: usize,
    /// Independent sampled passes used to estimate the standard error.
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Widths {
    One(usize),
    Many(Vec<usize>),
}

/// Flat `--config` document. Keys mirror the long flag names with
/// underscores; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: Option<ModelKind>,
    pub units: Option<Widths>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub mc_samples: Option<usize>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub share_weights: Option<bool>,
    pub share_output: Option<bool>,
    pub features: Option<usize>,
    pub designs: Option<usize>,
    pub data_seed: Option<u64>,
    pub steps: Option<usize>,
    pub holdout: Option<f64>,
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config {
            field: "config".into(),
            message: format!("{}: {}", path.display(), e.message()),
        })
    }
}

/// Fully resolved training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub units: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub mc_samples: usize,
    pub tau: f64,
    pub bounds: Bounds,
    pub seed: u64,
    pub data: Option<PathBuf>,
    /// Not part of the recorded settings: runs differing only in where they
    /// write must produce identical metrics.
    #[serde(skip)]
    pub out: PathBuf,
    pub mode: Mode,
    pub share_weights: bool,
    pub share_output: bool,
    pub features: usize,
    pub designs: usize,
    pub data_seed: u64,
    pub steps: usize,
    pub holdout: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::ArdLstm,
            units: vec![16],
            lr: 0.005,
            epochs: 4000,
            mc_samples: 100,
            tau: 1e-4,
            bounds: Bounds::default(),
            seed: 0,
            data: None,
            out: PathBuf::from("out"),
            mode: Mode::Sampled,
            share_weights: true,
            share_output: false,
            features: 2,
            designs: 7,
            data_seed: 0,
            steps: DEFAULT_STEPS,
            holdout: None,
        }
    }
}

fn config_error(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn parse_env_seed(env_seed: Option<&str>) -> Result<Option<u64>> {
    env_seed
        .map(|s| s.trim().parse::<u64>().map_err(|_| config_error("ARDLSTM_SEED", format!("not an unsigned integer: `{s}`"))))
        .transpose()
}

impl RunConfig {
    /// Merges flags over the config file over defaults. `env_seed` is the
    /// value of `ARDLSTM_SEED`, used when no other source sets the seed.
    pub fn resolve(args: &RunArgs, env_seed: Option<&str>) -> Result<Self> {
        let file = match &args.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let d = RunConfig::default();
        let units = if !args.units.is_empty() {
            args.units.clone()
        } else {
            match file.units {
                Some(Widths::One(n)) => vec![n],
                Some(Widths::Many(v)) => v,
                None => d.units,
            }
        };
        let seed = match args.seed.or(file.seed) {
            Some(s) => s,
            None => parse_env_seed(env_seed)?.unwrap_or(d.seed),
        };
        let bounds = Bounds {
            alpha: (
                args.alpha_min.or(file.alpha_min).unwrap_or(d.bounds.alpha.0),
                args.alpha_max.or(file.alpha_max).unwrap_or(d.bounds.alpha.1),
            ),
            beta: (
                args.beta_min.or(file.beta_min).unwrap_or(d.bounds.beta.0),
                args.beta_max.or(file.beta_max).unwrap_or(d.bounds.beta.1),
            ),
        };
        let cfg = RunConfig {
            model: args.model.or(file.model).unwrap_or(d.model),
            units,
            lr: args.lr.or(file.lr).unwrap_or(d.lr),
            epochs: args.epochs.or(file.epochs).unwrap_or(d.epochs),
            mc_samples: args.mc_samples.or(file.mc_samples).unwrap_or(d.mc_samples),
            tau: args.tau.or(file.tau).unwrap_or(d.tau),
            bounds,
            seed,
            data: args.data.clone().or(file.data),
            out: args.out.clone().or(file.out).unwrap_or(d.out),
            mode: args.mode.or(file.mode).unwrap_or(d.mode),
            share_weights: args.share_weights.or(file.share_weights).unwrap_or(d.share_weights),
            share_output: args.share_output.or(file.share_output).unwrap_or(d.share_output),
            features: args.features.or(file.features).unwrap_or(d.features),
            designs: args.designs.or(file.designs).unwrap_or(d.designs),
            data_seed: args.data_seed.or(file.data_seed).unwrap_or(d.data_seed),
            steps: file.steps.unwrap_or(d.steps),
            holdout: args.holdout.or(file.holdout),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.units.is_empty() || self.units.contains(&0) {
            return Err(config_error("units", "every width must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(config_error("lr", format!("must be positive, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(config_error("epochs", "must be at least 1"));
        }
        if self.mc_samples == 0 {
            return Err(config_error("mc_samples", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(config_error("tau", format!("must lie in [0, 1), got {}", self.tau)));
        }
        if self.designs < 2 {
            return Err(config_error("designs", "at least 2 designs are needed"));
        }
        if self.steps < 2 {
            return Err(config_error("steps", "at least 2 time steps are needed"));
        }
        self.bounds.validate()
    }

    /// Training dataset: the CSV given by `data` or the generated surrogate,
    /// minus the held-out design if one is set.
    pub fn dataset(&self) -> Result<SequenceDataset> {
        let full = match &self.data {
            Some(path) => {
                let header = read_csv_header(path)?;
                load_csv(path, &CsvSchema::infer(&header, self.features)?)?
            }
            None => generate_bending_like(
                &BendingSurrogateConfig::default(),
                &default_designs(self.designs),
                self.steps,
                self.data_seed,
            )?,
        };
        match self.holdout {
            None => Ok(full),
            Some(v) => {
                let idx = full
                    .designs
                    .iter()
                    .position(|d| (d - v).abs() <= 1e-9 * v.abs().max(1.0))
                    .ok_or_else(|| config_error("holdout", format!("no design at {v}; designs are {:?}", full.designs)))?;
                full.without_design(idx)
            }
        }
    }

    pub fn ard_config(&self, data: &SequenceDataset, units: usize) -> ArdLstmConfig {
        let mut c = ArdLstmConfig::new(data.n_features(), units, data.n_outputs());
        c.mc_samples = self.mc_samples;
        c.learning_rate = self.lr;
        c.tau = self.tau;
        c.max_epochs = self.epochs;
        c.bounds = self.bounds;
        c.share_weights_over_time = self.share_weights;
        c.share_output_over_time = self.share_output;
        c.propagation = self.mode.into();
        c
    }

    pub fn baseline_config(&self, units: usize) -> BaselineConfig {
        BaselineConfig {
            n_units: units,
            learning_rate: self.lr,
            epochs: self.epochs,
            ..BaselineConfig::default()
        }
    }

    fn out_dir(&self, units: usize) -> PathBuf {
        if self.units.len() == 1 {
            self.out.clone()
        } else {
            self.out.join(format!("units-{units}"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityMetrics {
    pub forget: f64,
    pub input: f64,
    pub candidate: f64,
    pub output: f64,
    pub readout: f64,
    pub total: f64,
}

impl From<SparsityReport> for SparsityMetrics {
    fn from(r: SparsityReport) -> Self {
        SparsityMetrics {
            forget: r.gates[Gate::Forget.index()],
            input: r.gates[Gate::Input.index()],
            candidate: r.gates[Gate::Candidate.index()],
            output: r.gates[Gate::Output.index()],
            readout: r.readout,
            total: r.total,
        }
    }
}

/// Contents of `metrics.json`. Fields added by later versions are kept in
/// `extra` when read back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub model: ModelKind,
    pub units: usize,
    pub epochs: usize,
    /// Whether the convergence rule fired (ARD-LSTM only).
    pub converged: Option<bool>,
    /// `R²` of the training predictions in physical units.
    pub r2: f64,
    /// `likelihood` for ARD-LSTM, `loss` for the baseline.
    pub objective: String,
    pub final_objective: f64,
    pub sparsity: Option<SparsityMetrics>,
    pub wall_time_s: f64,
    pub time_per_epoch_s: f64,
    pub config: RunConfig,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Metrics> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Parsed JSON with the wall-time fields removed.
pub fn strip_wall_time(mut v: Value) -> Value {
    if let Value::Object(map) = &mut v {
        for k in WALL_TIME_FIELDS {
            map.remove(k);
        }
    }
    v
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn physical_r2(data: &SequenceDataset, normalized_predictions: &[Matrix]) -> Result<f64> {
    let pred = normalized_predictions
        .iter()
        .map(|p| data.normalizer.denormalize_targets(p))
        .collect::<Result<Vec<_>>>()?;
    r_squared(&data.targets, &pred)
}

/// Outcome of one `train` run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub metrics: Metrics,
    pub checkpoint: Checkpoint,
}

fn write_ard_history(path: &Path, model: &ArdLstmModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "likelihood",
        "sparsity_forget",
        "sparsity_input",
        "sparsity_candidate",
        "sparsity_output",
        "sparsity_readout",
        "sparsity_total",
    ])?;
    for (n, s) in model.history.sparsity.iter().enumerate() {
        let lik = if n == 0 { String::new() } else { model.history.likelihood[n - 1].to_string() };
        let mut rec = vec![n.to_string(), lik];
        rec.extend(s.gates.iter().map(f64::to_string));
        rec.push(s.readout.to_string());
        rec.push(s.total.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_loss_history(path: &Path, loss: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss"])?;
    for (n, l) in loss.iter().enumerate() {
        w.write_record([(n + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains one model per configured width and writes `checkpoint.bin`,
/// `metrics.json` and `history.csv` for each.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainOutcome>> {
    let data = cfg.dataset()?;
    let inputs = data.normalized_inputs()?;
    let targets = data.normalized_targets()?;
    let mut outcomes = Vec::new();
    for &units in &cfg.units {
        let dir = cfg.out_dir(units);
        fs::create_dir_all(&dir)?;
        let start = Instant::now();
        let (model, r2, epochs, converged, objective, final_objective, sparsity) = match cfg.model {
            ModelKind::ArdLstm => {
                let mut model = ArdLstmModel::new(cfg.ard_config(&data, units), data.n_steps(), cfg.seed)?;
                let report = model.fit(&inputs, &targets)?;
                let pred = model.predict(&inputs, cfg.mode.into(), cfg.mc_samples, mix_seed(cfg.seed, 2))?;
                let r2 = physical_r2(&data, &pred.mean)?;
                write_ard_history(&dir.join("history.csv"), &model)?;
                let sparsity = Some(model.sparsity_report().into());
                (
                    SavedModel::Ard(model),
                    r2,
                    report.epochs,
                    Some(report.converged),
                    "likelihood",
                    report.final_likelihood,
                    sparsity,
                )
            }
            ModelKind::Lstm => {
                let mut model = BaselineModel::new(cfg.baseline_config(units), data.n_features(), data.n_outputs(), cfg.seed);
                model.fit(&inputs, &targets)?;
                let r2 = physical_r2(&data, &model.predict(&inputs)?)?;
                write_loss_history(&dir.join("history.csv"), &model.history)?;
                let last = model.history.last().copied().unwrap_or(f64::NAN);
                (SavedModel::Baseline(model), r2, cfg.epochs, None, "loss", last, None)
            }
        };
        let wall = start.elapsed().as_secs_f64();
        let metrics = Metrics {
            schema_version: METRICS_VERSION,
            model: cfg.model,
            units,
            epochs,
            converged,
            r2,
            objective: objective.into(),
            final_objective,
            sparsity,
            wall_time_s: wall,
            time_per_epoch_s: wall / epochs.max(1) as f64,
            config: RunConfig {
                units: vec![units],
                ..cfg.clone()
            },
            extra: BTreeMap::new(),
        };
        let ckpt = Checkpoint {
            model,
            dataset: data.clone(),
        };
        checkpoint::save(dir.join("checkpoint.bin"), &ckpt)?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        outcomes.push(TrainOutcome {
            dir,
            metrics,
            checkpoint: ckpt,
        });
    }
    Ok(outcomes)
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<PathBuf> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let d = RunConfig::default();
    let out = args.out.clone().or(file.out).unwrap_or(d.out);
    let designs = args.designs.or(file.designs).unwrap_or(d.designs);
    let steps = args.steps.or(file.steps).unwrap_or(d.steps);
    let seed = args.seed.or(file.data_seed).unwrap_or(d.data_seed);
    if designs == 0 {
        return Err(config_error("designs", "must be at least 1"));
    }
    if steps < 2 {
        return Err(config_error("steps", "at least 2 time steps are needed"));
    }
    let data = generate_bending_like(&BendingSurrogateConfig::default(), &default_designs(designs), steps, seed)?;
    fs::create_dir_all(&out)?;
    let path = out.join("dataset.csv");
    data.write_csv(&path)?;
    Ok(path)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<PathBuf> {
    let out = args.out.clone().unwrap_or_else(|| RunConfig::default().out);
    let ckpt_path = args.checkpoint.clone().unwrap_or_else(|| out.join("checkpoint.bin"));
    let ckpt = checkpoint::load(&ckpt_path)?;
    let model = match &ckpt.model {
        SavedModel::Ard(m) => m,
        SavedModel::Baseline(_) => {
            return Err(Error::NotSweepable("baseline checkpoints carry no predictive variance".into()))
        }
    };
    let points = args.grid_points.unwrap_or(100);
    if points == 0 {
        return Err(config_error("grid_points", "must be at least 1"));
    }
    let grid = linspace(args.grid_min.unwrap_or(-75.0), args.grid_max.unwrap_or(75.0), points);
    let opts = SweepOptions {
        propagation: args.mode.unwrap_or(Mode::MeanBased).into(),
        mc_samples: args.mc_samples.unwrap_or(100),
        seed: args.seed.unwrap_or(0),
        sense: if args.minimize { ImprovementSense::Minimize } else { ImprovementSense::Maximize },
        reference: match args.reference.unwrap_or(Reference::Interpolated) {
            Reference::Interpolated => EiReference::Interpolated,
            Reference::BestObserved => EiReference::BestObserved,
        },
    };
    let result = match &args.reference_checkpoint {
        None => uncertainty_sweep(model, &ckpt.dataset, &grid, &opts)?,
        Some(p) => {
            let reference = checkpoint::load(p)?;
            let SavedModel::Ard(ref_model) = &reference.model else {
                return Err(Error::NotSweepable("the reference checkpoint must hold an ard-lstm model".into()));
            };
            uncertainty_sweep_against(model, &ckpt.dataset, ref_model, &reference.dataset, &grid, &opts)?
        }
    };
    fs::create_dir_all(&out)?;
    let path = out.join("sweep.csv");
    result.write_csv(&path)?;
    Ok(path)
}

/// Contents of `compare.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub timing_epochs: usize,
    pub sampled_time_per_epoch_s: f64,
    pub mean_based_time_per_epoch_s: f64,
    /// Mean-based over sampled time per epoch.
    pub time_ratio: f64,
    pub reference_samples: usize,
    pub replicates: usize,
    /// See [`Agreement`].
    pub within_3se_fraction: f64,
    pub within_3se_naive_fraction: f64,
    pub max_hidden_diff: f64,
    pub max_output_diff: f64,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

pub fn cmd_compare(args: &CompareArgs, env_seed: Option<&str>) -> Result<(PathBuf, Comparison)> {
    let cfg = RunConfig::resolve(&args.run, env_seed)?;
    let (model, data) = match &args.checkpoint {
        Some(p) => {
            let ckpt = checkpoint::load(p)?;
            match ckpt.model {
                SavedModel::Ard(m) => (m, ckpt.dataset),
                SavedModel::Baseline(_) => {
                    return Err(Error::NotSweepable("baseline checkpoints have a single propagation mode".into()))
                }
            }
        }
        None => {
            if cfg.model != ModelKind::ArdLstm {
                return Err(config_error("model", "compare needs an ard-lstm model"));
            }
            let data = cfg.dataset()?;
            let mut model = ArdLstmModel::new(cfg.ard_config(&data, cfg.units[0]), data.n_steps(), cfg.seed)?;
            model.fit(&data.normalized_inputs()?, &data.normalized_targets()?)?;
            (model, data)
        }
    };
    let inputs = data.normalized_inputs()?;
    let targets = data.normalized_targets()?;
    let timing_epochs = args.timing_epochs.max(1);
    let time_mode = |propagation: Propagation| -> Result<f64> {
        let mut m = model.clone();
        let opts = ForwardOptions {
            propagation,
            mc_samples: cfg.mc_samples,
            keep_samples: false,
        };
        let start = Instant::now();
        for n in 0..timing_epochs {
            let epoch = m.epochs_trained() + 1;
            let trace = m.forward_epoch(&inputs, opts, mix_seed(cfg.seed, 3 + n as u64))?;
            m.backward_epoch(&trace, &targets, epoch)?;
        }
        Ok(start.elapsed().as_secs_f64() / timing_epochs as f64)
    };
    let sampled = time_mode(Propagation::Sampled)?;
    let mean_based = time_mode(Propagation::MeanBased)?;
    let agreement = propagation_agreement(&model, &inputs, args.reference_samples.max(1), args.replicates, mix_seed(cfg.seed, 4))?;
    let cmp = Comparison {
        schema_version: METRICS_VERSION,
        timing_epochs,
        sampled_time_per_epoch_s: sampled,
        mean_based_time_per_epoch_s: mean_based,
        time_ratio: mean_based / sampled,
        reference_samples: args.reference_samples.max(1),
        replicates: agreement.replicates,
        within_3se_fraction: agreement.within_3se,
        within_3se_naive_fraction: agreement.within_3se_naive,
        max_hidden_diff: agreement.max_hidden_diff,
        max_output_diff: agreement.max_output_diff,
        extra: BTreeMap::new(),
    };
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("compare.json");
    write_json(&path, &cmp)?;
    Ok((path, cmp))
}

/// Runs a parsed command. `env_seed` is the value of `ARDLSTM_SEED`.
pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => {
            let path = cmd_generate(a)?;
            println!("wrote {}", path.display());
        }
        Command::Train(a) => {
            let cfg = RunConfig::resolve(a, env_seed)?;
            for o in cmd_train(&cfg)? {
                println!(
                    "{} units={} epochs={} r2={:.6} -> {}",
                    match o.metrics.model {
                        ModelKind::Lstm => "lstm",
                        ModelKind::ArdLstm => "ard-lstm",
                    },
                    o.metrics.units,
                    o.metrics.epochs,
                    o.metrics.r2,
                    o.dir.display()
                );
            }
        }
        Command::Sweep(a) => {
            let path = cmd_sweep(a)?;
            println!("wrote {}", path.display());
        }
        Command::Compare(a) => {
            let (path, c) = cmd_compare(a, env_seed)?;
            println!(
                "time ratio {:.3}, within 3 SE {:.3} -> {}",
                c.time_ratio,
                c.within_3se_fraction,
                path.display()
            );
        }
    }
    Ok(())
}

/// One-line rendering used on stderr: `error[CODE]: message`.
pub fn render_error(e: &Error) -> String {
    format!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("ardlstm").chain(args.iter().copied())).unwrap()
    }

    fn run_args(cli: Cli) -> RunArgs {
        match cli.command {
            Command::Train(a) => a,
            _ => panic!("not a train command"),
        }
    }

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::resolve(&RunArgs::default(), None).unwrap();
        assert_eq!(cfg.lr, 0.005);
        assert_eq!(cfg.epochs, 4000);
        assert_eq!(cfg.mc_samples, 100);
        assert_eq!(cfg.tau, 1e-4);
        assert_eq!(cfg.bounds.alpha, (1e1, 1e6));
        assert_eq!(cfg.bounds.beta, (1e4, 1e6));
        assert!(cfg.share_weights);
    }

    #[test]
    fn flags_beat_file_beats_env() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "units = 8\nlr = 0.01\nseed = 3\nmode = \"mean-based\"\n").unwrap();
        let p = path.to_str().unwrap();

        let cfg = RunConfig::resolve(&run_args(parse(&["train", "--config", p, "--lr", "0.02"])), Some("9")).unwrap();
        assert_eq!((cfg.units.clone(), cfg.lr, cfg.seed, cfg.mode), (vec![8], 0.02, 3, Mode::MeanBased));

        let cfg = RunConfig::resolve(&run_args(parse(&["train", "--config", p, "--seed", "5"])), Some("9")).unwrap();
        assert_eq!(cfg.seed, 5);

        let cfg = RunConfig::resolve(&run_args(parse(&["train"])), Some("9")).unwrap();
        assert_eq!(cfg.seed, 9);
        let err = RunConfig::resolve(&run_args(parse(&["train"])), Some("x")).unwrap_err();
        assert!(matches!(err, Error::Config { field, .. } if field == "ARDLSTM_SEED"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "units = 8\nlearning_rate = 0.01\n").unwrap();
        let err = RunConfig::resolve(&run_args(parse(&["train", "--config", path.to_str().unwrap()])), None).unwrap_err();
        assert_eq!(err.code(), "E_CONFIG");
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn invalid_values_name_their_field() {
        for (flag, value, field) in [("--units", "0", "units"), ("--lr", "0", "lr"), ("--tau", "2", "tau")] {
            let err = RunConfig::resolve(&run_args(parse(&["train", flag, value])), None).unwrap_err();
            assert!(matches!(&err, Error::Config { field: f, .. } if f == field), "{err}");
        }
    }

    #[test]
    fn width_lists_and_share_flags() {
        let cfg = RunConfig::resolve(&run_args(parse(&["train", "--units", "16,32", "--share-weights", "false"])), None).unwrap();
        assert_eq!(cfg.units, vec![16, 32]);
        assert!(!cfg.share_weights);
        assert_eq!(cfg.out_dir(32), PathBuf::from("out/units-32"));
        let cfg = RunConfig::resolve(&run_args(parse(&["train", "--share-output"])), None).unwrap();
        assert!(cfg.share_output);
    }

    #[test]
    fn error_rendering_is_one_line() {
        let e = Error::MissingCheckpoint(PathBuf::from("a/b.bin"));
        assert_eq!(render_error(&e), "error[E_MISSING_CHECKPOINT]: checkpoint not found: a/b.bin");
    }

    #[test]
    fn unknown_metrics_fields_survive_a_read() {
        let dir = tempfile::tempdir().unwrap();
        let m = Metrics {
            schema_version: METRICS_VERSION,
            model: ModelKind::Lstm,
            units: 2,
            epochs: 1,
            converged: None,
            r2: 0.5,
            objective: "loss".into(),
            final_objective: 1.0,
            sparsity: None,
            wall_time_s: 0.1,
            time_per_epoch_s: 0.1,
            config: RunConfig::default(),
            extra: BTreeMap::from([("future".to_string(), serde_json::json!([1, 2]))]),
        };
        let path = dir.path().join("metrics.json");
        write_json(&path, &m).unwrap();
        let back = read_metrics(&path).unwrap();
        assert_eq!(back.extra["future"], serde_json::json!([1, 2]));
        let stripped = strip_wall_time(serde_json::to_value(&back).unwrap());
        assert!(stripped.get("wall_time_s").is_none() && stripped.get("r2").is_some());
    }
}
