//! Command-line front end: argument parsing, job resolution and execution.
//!
//! Every command is first resolved into a [`Job`] holding the complete configuration
//! (defaults and seeds included). The job is written to `manifest.json` in the output
//! directory, and `replay` runs a manifest again.
//!
//! Settings precedence, lowest to highest: built-in defaults, the `--config` file,
//! command-line flags. For `tune`, each grid point's values are applied last.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisKind, Domain, Grid};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{grid_search, kfold_cv, replicate_harness, ReplicateConfig, Selection};
use crate::fnn::{Activation, Optimizer, TrainHistory};
use crate::io::{
    load_dataset, read_grid, write_dataset, DatasetSchema, GridFile, ModelKind, OneOrMany, Settings,
};
use crate::model::{FittedModel, ModelFile, ModelSpec};
use crate::simgen::{NoiseMode, Scenario, ScenarioSpec, DEFAULT_GRID_POINTS, DEFAULT_KL_TERMS};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "funcnn", version, about = "Functional neural networks for curve classification")]
pub struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulated two-class dataset.
    Simulate(SimulateArgs),
    /// Fit a model on a dataset.
    Fit(FitArgs),
    /// Predict labels and class probabilities with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation.
    Cv(CvArgs),
    /// Grid search over model settings.
    Tune(TuneArgs),
    /// Write estimated functional weights as plot-ready CSV.
    ExportWeights(ExportArgs),
    /// Repeated simulate, split, fit and score runs.
    Replicate(ReplicateArgs),
    /// Run the job stored in a manifest again.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of equally spaced points on [0, 1].
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = DEFAULT_KL_TERMS)]
    pub kl_terms: usize,
    /// per-curve, per-point or none.
    #[arg(long, default_value = "per-curve")]
    pub noise: NoiseMode,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Dataset layout flags.
#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Label column name (default "label").
    #[arg(long)]
    pub label: Option<String>,
    /// Scalar covariate columns, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scalars: Vec<String>,
    /// Curve columns: "*", "FIRST..LAST" or "PREFIX*".
    #[arg(long)]
    pub columns: Option<String>,
    /// One-column CSV of continuum values (default: numeric column headers).
    #[arg(long)]
    pub continuum: Option<PathBuf>,
    /// Smoothing basis, e.g. "fourier:35" or "bspline:20:4".
    #[arg(long)]
    pub basis: Option<String>,
}

/// Model and config-file flags.
#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// TOML settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// fnn, nn or flm.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Number of hidden layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub neurons: Vec<usize>,
    /// Hidden layer activations, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub activations: Vec<Activation>,
    #[arg(long)]
    pub learn_rate: Option<f64>,
    #[arg(long)]
    pub decay_rate: Option<f64>,
    #[arg(long)]
    pub validation_split: Option<f64>,
    /// Functional weight basis sizes, one per covariate or one for all.
    #[arg(long, value_delimiter = ',')]
    pub weight_basis: Vec<usize>,
    #[arg(long)]
    pub weight_basis_kind: Option<BasisKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Hidden layer dropout rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub dropout: Vec<f64>,
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    /// Feed raw inputs to the network instead of standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed FLM penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// FLM penalty candidates for inner cross-validation, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    /// Inner folds for FLM penalty tuning.
    #[arg(long)]
    pub inner_folds: Option<usize>,
}

fn one_or_many<T: Clone>(values: &[T]) -> Option<OneOrMany<T>> {
    match values {
        [] => None,
        [v] => Some(OneOrMany::One(v.clone())),
        _ => Some(OneOrMany::Many(values.to_vec())),
    }
}

fn non_empty<T: Clone>(values: &[T]) -> Option<Vec<T>> {
    (!values.is_empty()).then(|| values.to_vec())
}

impl ModelArgs {
    fn flags(&self) -> Settings {
        Settings {
            model: self.model,
            layers: self.layers,
            neurons: one_or_many(&self.neurons),
            activations: one_or_many(&self.activations),
            learn_rate: self.learn_rate,
            decay_rate: self.decay_rate,
            validation_split: self.validation_split,
            weight_basis: one_or_many(&self.weight_basis),
            weight_basis_kind: self.weight_basis_kind,
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            dropout: one_or_many(&self.dropout),
            optimizer: self.optimizer,
            standardize: self.no_standardize.then_some(false),
            seed: self.seed,
            lambda: self.lambda,
            lambdas: non_empty(&self.lambdas),
            folds: self.inner_folds,
            ..Default::default()
        }
    }

    fn file(&self) -> Result<Settings> {
        match &self.config {
            Some(path) => Settings::load(path),
            None => Ok(Settings::default()),
        }
    }
}

impl DataArgs {
    fn flags(&self) -> Settings {
        Settings {
            label: self.label.clone(),
            scalars: non_empty(&self.scalars),
            columns: self.columns.clone(),
            continuum: self.continuum.clone(),
            basis: self.basis.clone(),
            ..Default::default()
        }
    }
}

fn settings(model: &ModelArgs, data: &DataArgs) -> Result<Settings> {
    Ok(model.file()?.overlay(data.flags()).overlay(model.flags()))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `fit` or `tune`.
    #[arg(long)]
    pub model_file: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML settings file (only the data layout keys are used).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of folds.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// TOML grid file: base settings plus a [grid] table of candidate lists.
    #[arg(long)]
    pub grid: PathBuf,
    /// Folds for scoring each grid point.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Score on one stratified holdout of this fraction instead of k folds.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Model file written by `fit` or `tune`.
    #[arg(long)]
    pub model_file: PathBuf,
    /// Covariate index (default: every covariate).
    #[arg(long)]
    pub k: Option<usize>,
    /// One-column CSV of evaluation points (default: equally spaced on the domain).
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// Class whose FLM weight to export; two-class models default to class 1 minus class 0.
    #[arg(long)]
    pub class: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(long, default_value_t = 1)]
    pub scenario: u8,
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    #[arg(long, default_value_t = 150)]
    pub n_train: usize,
    #[arg(long, default_value_t = 30)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    pub points: usize,
    #[arg(long, default_value = "per-curve")]
    pub noise: NoiseMode,
    /// Models to compare, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "fnn,nn,flm")]
    pub models: Vec<ModelKind>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the manifest's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Simulate {
        spec: ScenarioSpec,
        out: PathBuf,
    },
    Fit {
        data: PathBuf,
        schema: DatasetSchema,
        model: ModelSpec,
        out: PathBuf,
    },
    Predict {
        model_file: PathBuf,
        data: PathBuf,
        schema: DatasetSchema,
        out: PathBuf,
    },
    Cv {
        data: PathBuf,
        schema: DatasetSchema,
        model: ModelSpec,
        k: usize,
        seed: u64,
        out: PathBuf,
    },
    Tune {
        data: PathBuf,
        schema: DatasetSchema,
        grid: Vec<ModelSpec>,
        selection: Selection,
        seed: u64,
        out: PathBuf,
    },
    ExportWeights {
        model_file: PathBuf,
        covariates: Option<Vec<usize>>,
        grid: Option<PathBuf>,
        points: usize,
        class: Option<usize>,
        out: PathBuf,
    },
    Replicate {
        config: ReplicateConfig,
        out: PathBuf,
    },
}

impl Job {
    pub fn out(&self) -> &Path {
        match self {
            Job::Simulate { out, .. }
            | Job::Fit { out, .. }
            | Job::Predict { out, .. }
            | Job::Cv { out, .. }
            | Job::Tune { out, .. }
            | Job::ExportWeights { out, .. }
            | Job::Replicate { out, .. } => out,
        }
    }

    fn set_out(&mut self, dir: PathBuf) {
        match self {
            Job::Simulate { out, .. }
            | Job::Fit { out, .. }
            | Job::Predict { out, .. }
            | Job::Cv { out, .. }
            | Job::Tune { out, .. }
            | Job::ExportWeights { out, .. }
            | Job::Replicate { out, .. } => *out = dir,
        }
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
}

impl Manifest {
    pub fn new(job: Job) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            job,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.tool != env!("CARGO_PKG_NAME") {
            return Err(Error::InvalidConfig(format!("{} is not a {} manifest", path.display(), env!("CARGO_PKG_NAME"))));
        }
        Ok(manifest)
    }
}

fn simulation_spec(scenario: u8, n: usize, seed: u64, points: usize, kl_terms: usize, noise: NoiseMode) -> Result<ScenarioSpec> {
    let spec = ScenarioSpec {
        grid: Grid::uniform(Domain::unit(), points)?,
        kl_terms,
        noise,
        ..ScenarioSpec::new(Scenario::from_number(scenario)?, n, seed)
    };
    spec.validate()?;
    Ok(spec)
}

fn load(path: &Path, schema: &DatasetSchema) -> Result<Dataset> {
    let data = load_dataset(path, schema)?;
    log::info!(
        "loaded {} observations, {} classes ({})",
        data.len(),
        data.n_classes(),
        data.label_map().names().join(", ")
    );
    Ok(data)
}

/// Resolves parsed arguments into a job. Commands that need the class count load
/// the dataset here.
pub fn resolve(command: Command) -> Result<Job> {
    match command {
        Command::Simulate(a) => Ok(Job::Simulate {
            spec: simulation_spec(a.scenario, a.n, a.seed, a.points, a.kl_terms, a.noise)?,
            out: a.out.out,
        }),
        Command::Fit(a) => {
            let s = settings(&a.model, &a.data)?;
            let schema = s.schema()?;
            let data = load(&a.data.data, &schema)?;
            Ok(Job::Fit {
                model: s.model_spec(data.n_classes())?,
                data: a.data.data,
                schema,
                out: a.out.out,
            })
        }
        Command::Predict(a) => {
            let file = match &a.config {
                Some(path) => Settings::load(path)?,
                None => Settings::default(),
            };
            Ok(Job::Predict {
                schema: file.overlay(a.data.flags()).schema()?,
                model_file: a.model_file,
                data: a.data.data,
                out: a.out.out,
            })
        }
        Command::Cv(a) => {
            let s = settings(&a.model, &a.data)?;
            let schema = s.schema()?;
            let data = load(&a.data.data, &schema)?;
            Ok(Job::Cv {
                model: s.model_spec(data.n_classes())?,
                seed: s.seed.unwrap_or(0),
                k: a.k,
                data: a.data.data,
                schema,
                out: a.out.out,
            })
        }
        Command::Tune(a) => {
            let grid_file = GridFile::load(&a.grid)?;
            let base = a
                .model
                .file()?
                .overlay(grid_file.base_settings()?)
                .overlay(a.data.flags())
                .overlay(a.model.flags());
            let schema = base.schema()?;
            let data = load(&a.data.data, &schema)?;
            let grid = grid_file
                .points()?
                .into_iter()
                .map(|point| base.clone().overlay(point).model_spec(data.n_classes()))
                .collect::<Result<Vec<_>>>()?;
            Ok(Job::Tune {
                grid,
                selection: match a.holdout {
                    Some(f) => Selection::Holdout(f),
                    None => Selection::KFold(a.k),
                },
                seed: base.seed.unwrap_or(0),
                data: a.data.data,
                schema,
                out: a.out.out,
            })
        }
        Command::ExportWeights(a) => Ok(Job::ExportWeights {
            model_file: a.model_file,
            covariates: a.k.map(|k| vec![k]),
            grid: a.grid,
            points: a.points,
            class: a.class,
            out: a.out.out,
        }),
        Command::Replicate(a) => {
            let s = a.model.file()?.overlay(a.model.flags());
            if a.n_train >= a.n {
                return Err(Error::InvalidArgument(format!(
                    "n_train ({}) must be smaller than n ({})",
                    a.n_train, a.n
                )));
            }
            let seed = s.seed.unwrap_or(0);
            let models = a
                .models
                .iter()
                .map(|&kind| {
                    let spec = Settings {
                        model: Some(kind),
                        ..s.clone()
                    }
                    .model_spec(2)?;
                    Ok((spec.name().to_string(), spec))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Job::Replicate {
                config: ReplicateConfig {
                    scenario: simulation_spec(a.scenario, a.n, seed, a.points, DEFAULT_KL_TERMS, a.noise)?,
                    n_train: a.n_train,
                    n_replicates: a.replicates,
                    seed,
                    models,
                },
                out: a.out.out,
            })
        }
        Command::Replay(a) => {
            let mut job = Manifest::load(&a.manifest)?.job;
            if let Some(out) = a.out {
                job.set_out(out);
            }
            Ok(job)
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_history(out: impl Write, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in 0..history.epochs_run() {
        w.write_record([
            (e + 1).to_string(),
            history.train_loss[e].to_string(),
            history.train_accuracy[e].to_string(),
            opt(history.val_loss[e]),
            opt(history.val_accuracy[e]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Written by `fit` next to the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub n_observations: usize,
    pub n_classes: usize,
    pub n_params: usize,
    /// Accuracy of the saved model on the full fitting data.
    pub training_accuracy: f64,
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
    pub stopped_early: Option<bool>,
    pub lambda: Option<f64>,
    pub converged: Option<bool>,
    pub gradient_norm: Option<f64>,
}

fn accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    let correct = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    correct as f64 / truth.len() as f64
}

fn fit(data: &Path, schema: &DatasetSchema, spec: &ModelSpec, out: &Path) -> Result<()> {
    let data = load(data, schema)?;
    let (model, history) = spec.fit(&data)?;
    let prediction = model.predict(&data)?;
    let flm = match &model {
        FittedModel::Flm(m) => Some(m),
        _ => None,
    };
    let summary = FitSummary {
        model: model.kind().to_string(),
        n_observations: data.len(),
        n_classes: data.n_classes(),
        n_params: model.n_params(),
        training_accuracy: accuracy(data.labels(), &prediction.labels),
        epochs_run: history.as_ref().map(TrainHistory::epochs_run),
        best_epoch: history.as_ref().map(|h| h.best_epoch),
        stopped_early: history.as_ref().map(|h| h.stopped_early),
        lambda: flm.map(|m| m.lambda),
        converged: flm.map(|m| m.diagnostics.converged),
        gradient_norm: flm.map(|m| m.diagnostics.gradient_norm),
    };
    ModelFile::new(model).save(&out.join("model.json"))?;
    if let Some(history) = &history {
        write_history(create(out, "history.csv")?, history)?;
    }
    write_json(out, "summary.json", &summary)?;
    log::info!("training accuracy {:.4}", summary.training_accuracy);
    Ok(())
}

fn predict(model_file: &Path, data: &Path, schema: &DatasetSchema, out: &Path) -> Result<()> {
    let model = ModelFile::load(model_file)?.model;
    let data = load(data, schema)?;
    let prediction = model.predict(&data)?;
    let names = model.label_map();
    let mut w = csv::Writer::from_writer(create(out, "predictions.csv")?);
    let mut header = vec!["row".to_string(), "label".to_string(), "predicted".to_string()];
    header.extend(names.names().iter().map(|n| format!("p_{n}")));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut row = vec![
            i.to_string(),
            data.label_map().name(data.labels()[i]).to_string(),
            names.name(prediction.labels[i]).to_string(),
        ];
        row.extend(prediction.probabilities.row(i).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn export_weights(
    model_file: &Path,
    covariates: Option<&[usize]>,
    grid: Option<&Path>,
    points: usize,
    class: Option<usize>,
    out: &Path,
) -> Result<()> {
    let model = ModelFile::load(model_file)?.model;
    let inputs = match &model {
        FittedModel::Fnn(m) => m.extractor.covariates(),
        FittedModel::Flm(m) => m.extractor.covariates(),
        FittedModel::Nn(_) => {
            return Err(Error::InvalidArgument(
                "a conventional network has no functional weights to export".into(),
            ))
        }
    };
    let all: Vec<usize> = (0..inputs.len()).collect();
    for &k in covariates.unwrap_or(&all) {
        let input = inputs.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!("covariate {k} does not exist (model has {})", inputs.len()))
        })?;
        let grid = match grid {
            Some(path) => read_grid(path)?,
            None => Grid::uniform(input.weight_basis.domain(), points)?,
        };
        let beta = match &model {
            FittedModel::Fnn(m) => m.functional_weight(k, &grid)?,
            FittedModel::Flm(m) => match class {
                Some(h) => m.functional_weight(h, k, &grid)?,
                None if m.label_map.len() == 2 => {
                    let b1 = m.functional_weight(1, k, &grid)?;
                    let b0 = m.functional_weight(0, k, &grid)?;
                    b1.iter().zip(&b0).map(|(a, b)| a - b).collect()
                }
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "the model has {} classes; choose one with --class",
                        m.label_map.len()
                    )))
                }
            },
            FittedModel::Nn(_) => unreachable!(),
        };
        let name: String = input
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let mut w = csv::Writer::from_writer(create(out, &format!("weights_{name}.csv"))?);
        w.write_record(["t", "beta_hat"])?;
        for (t, b) in grid.points().iter().zip(&beta) {
            w.write_record([t.to_string(), b.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Executes a job and writes its outputs and manifest into the job's output directory.
pub fn run(job: &Job) -> Result<()> {
    let out = job.out();
    std::fs::create_dir_all(out).map_err(|e| Error::Data(format!("{}: {e}", out.display())))?;
    match job {
        Job::Simulate { spec, out } => {
            let data = spec.generate()?;
            write_dataset(create(out, "data.csv")?, &data, "label")?;
        }
        Job::Fit {
            data,
            schema,
            model,
            out,
        } => fit(data, schema, model, out)?,
        Job::Predict {
            model_file,
            data,
            schema,
            out,
        } => predict(model_file, data, schema, out)?,
        Job::Cv {
            data,
            schema,
            model,
            k,
            seed,
            out,
        } => {
            let data = load(data, schema)?;
            let report = kfold_cv(&data, *k, model, *seed)?;
            log::info!("cv accuracy {:.4}", report.metrics.accuracy);
            write_json(out, "metrics.json", &report)?;
            report.write_folds_csv(create(out, "folds.csv")?)?;
        }
        Job::Tune {
            data,
            schema,
            grid,
            selection,
            seed,
            out,
        } => {
            let data = load(data, schema)?;
            let result = grid_search(&data, grid, *selection, *seed)?;
            result.write_csv(create(out, "leaderboard.csv")?)?;
            let (model, _) = result.best_entry().spec.fit(&data)?;
            ModelFile::new(model).save(&out.join("best_model.json"))?;
        }
        Job::ExportWeights {
            model_file,
            covariates,
            grid,
            points,
            class,
            out,
        } => export_weights(model_file, covariates.as_deref(), grid.as_deref(), *points, *class, out)?,
        Job::Replicate { config, out } => {
            let report = replicate_harness(config)?;
            report.write_csv(create(out, "replicates.csv")?)?;
            let mut w = csv::Writer::from_writer(create(out, "summary.csv")?);
            w.write_record(["model", "mean_error", "sd_error", "n_ok", "n_failed"])?;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for s in report.summary() {
                w.write_record([
                    s.model.clone(),
                    opt(s.mean_error),
                    opt(s.sd_error),
                    s.n_ok.to_string(),
                    s.n_failed.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    write_json(out, MANIFEST_FILE, &Manifest::new(job.clone()))
}

/// Applies the global flags, then resolves and runs the command.
pub fn execute(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let job = resolve(cli.command)?;
    run(&job)
}
