//! Classification metrics, stratified cross-validation, grid search and the simulation
//! replicate harness.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::simgen::ScenarioSpec;

/// Misclassification rate: the mean of `1{ŷ ≠ y}`.
pub fn mspe(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels against {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::InvalidArgument("no labels to score".into()));
    }
    let wrong = y_true.iter().zip(y_pred).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / y_true.len() as f64)
}

/// `H × H` counts; entry `(h, h')` counts observations of class `h` predicted as `h'`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let h = counts.len();
        if h == 0 {
            return Err(Error::InvalidArgument("empty confusion matrix".into()));
        }
        if counts.iter().any(|r| r.len() != h) {
            return Err(Error::DimensionMismatch("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_labels(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels against {} predictions",
                y_true.len(),
                y_pred.len()
            )));
        }
        let mut cm = Self::zeros(n_classes);
        for (&t, &p) in y_true.iter().zip(y_pred) {
            let bad = if t >= n_classes { Some(t) } else if p >= n_classes { Some(p) } else { None };
            if let Some(label) = bad {
                return Err(Error::InvalidLabel { label, n_classes });
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes()).map(|h| self.counts[h][h]).sum()
    }

    pub fn add(&mut self, other: &Self) -> Result<()> {
        if other.n_classes() != self.n_classes() {
            return Err(Error::DimensionMismatch("confusion matrices differ in size".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

/// One-vs-rest rates for class `h`: sensitivity, specificity, PPV and NPV, each `None`
/// when its denominator is zero.
fn class_rates(cm: &ConfusionMatrix, h: usize) -> [Option<f64>; 4] {
    let total = cm.total();
    let tp = cm.get(h, h);
    let fn_ = (0..cm.n_classes()).map(|p| cm.get(h, p)).sum::<u64>() - tp;
    let fp = (0..cm.n_classes()).map(|t| cm.get(t, h)).sum::<u64>() - tp;
    let tn = total - tp - fn_ - fp;
    let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
    [
        ratio(tp, tp + fn_),
        ratio(tn, tn + fp),
        ratio(tp, tp + fp),
        ratio(tn, tn + fn_),
    ]
}

/// Accuracy, MSPE and macro-averaged one-vs-rest rates.
///
/// With two classes the rates are those of class 1. Otherwise each rate is the mean over
/// classes where it is defined; a rate undefined for every class is `None` and its name
/// is listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mspe: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub undefined: Vec<String>,
    pub fold_accuracies: Vec<f64>,
    /// Sample standard deviation of `fold_accuracies`; `None` with fewer than two folds.
    pub sd_accuracy: Option<f64>,
}

impl Metrics {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let total = cm.total();
        if total == 0 {
            return Err(Error::InvalidArgument("confusion matrix is empty".into()));
        }
        let mspe = (total - cm.correct()) as f64 / total as f64;
        let accuracy = 1.0 - mspe;
        let per_class: Vec<[Option<f64>; 4]> = if cm.n_classes() == 2 {
            vec![class_rates(cm, 1)]
        } else {
            (0..cm.n_classes()).map(|h| class_rates(cm, h)).collect()
        };
        let mut rates = [None; 4];
        for (r, rate) in rates.iter_mut().enumerate() {
            let defined: Vec<f64> = per_class.iter().filter_map(|c| c[r]).collect();
            if !defined.is_empty() {
                *rate = Some(defined.iter().sum::<f64>() / defined.len() as f64);
            }
        }
        let names = ["sensitivity", "specificity", "ppv", "npv"];
        let undefined = names
            .iter()
            .zip(&rates)
            .filter(|(_, r)| r.is_none())
            .map(|(n, _)| n.to_string())
            .collect();
        Ok(Self {
            accuracy,
            mspe,
            sensitivity: rates[0],
            specificity: rates[1],
            ppv: rates[2],
            npv: rates[3],
            undefined,
            fold_accuracies: Vec::new(),
            sd_accuracy: None,
        })
    }

    fn with_folds(mut self, fold_accuracies: Vec<f64>) -> Self {
        self.sd_accuracy = sample_sd(&fold_accuracies);
        self.fold_accuracies = fold_accuracies;
        self
    }
}

/// Sample standard deviation (divisor `n - 1`).
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Class-sorted order with each class shuffled under `seed`.
fn stratified_order(labels: &[usize], seed: u64) -> Vec<usize> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for h in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == h).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    order
}

/// Stratified folds: the class-sorted, within-class shuffled order is dealt round-robin,
/// so fold sizes differ by at most one and every class is spread across the folds.
/// Each fold's indices are returned sorted.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if k > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{k} folds requested for {} observations",
            labels.len()
        )));
    }
    let mut folds = vec![Vec::new(); k];
    for (p, i) in stratified_order(labels, seed).into_iter().enumerate() {
        folds[p % k].push(i);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Stratified `(train, test)` split holding out about `fraction` of every class.
pub fn stratified_holdout(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("holdout fraction must be in (0, 1), got {fraction}")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, i) in stratified_order(labels, seed).into_iter().enumerate() {
        if ((p + 1) as f64 * fraction).floor() > (p as f64 * fraction).floor() {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("holdout split leaves an empty side".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn complement(n: usize, excluded: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in excluded {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Trains `spec` on `train` and scores it on `test`.
pub fn evaluate_split(data: &Dataset, train: &[usize], test: &[usize], spec: &ModelSpec) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("a fold has no test observations".into()));
    }
    let (model, _) = spec.fit(&data.subset(train)?)?;
    let test_data = data.subset(test)?;
    let pred = model.predict(&test_data)?;
    ConfusionMatrix::from_labels(test_data.labels(), &pred.labels, data.n_classes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    /// Metrics of the pooled confusion matrix, with per-fold accuracies and their SD.
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
    pub folds: Vec<FoldReport>,
}

impl CvReport {
    /// One row per fold: fold, n_test, accuracy, mspe.
    pub fn write_folds_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "n_test", "accuracy", "mspe"])?;
        for f in &self.folds {
            w.write_record([
                f.fold.to_string(),
                f.test_indices.len().to_string(),
                f.accuracy.to_string(),
                (1.0 - f.accuracy).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stratified `k`-fold cross-validation of `spec` on `data`.
///
/// Each fold's model sees only its training observations. Folds run in parallel and are
/// collected in fold order.
pub fn kfold_cv(data: &Dataset, k: usize, spec: &ModelSpec, seed: u64) -> Result<CvReport> {
    let folds = stratified_folds(data.labels(), k, seed)?;
    let confusions: Vec<ConfusionMatrix> = folds
        .par_iter()
        .map(|test| evaluate_split(data, &complement(data.len(), test), test, spec))
        .collect::<Result<_>>()?;
    let mut pooled = ConfusionMatrix::zeros(data.n_classes());
    let mut reports = Vec::with_capacity(k);
    for (fold, (test, cm)) in folds.into_iter().zip(confusions).enumerate() {
        pooled.add(&cm)?;
        let accuracy = cm.correct() as f64 / cm.total() as f64;
        reports.push(FoldReport {
            fold,
            test_indices: test,
            confusion: cm,
            accuracy,
        });
    }
    let metrics = Metrics::from_confusion(&pooled)?.with_folds(reports.iter().map(|f| f.accuracy).collect());
    Ok(CvReport {
        k,
        seed,
        metrics,
        confusion: pooled,
        folds: reports,
    })
}

/// How grid-search cells are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Stratified k-fold cross-validation.
    KFold(usize),
    /// A single stratified holdout of the given fraction.
    Holdout(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// Position in the input grid.
    pub index: usize,
    pub spec: ModelSpec,
    pub n_params: Option<usize>,
    pub accuracy: Option<f64>,
    pub sd_accuracy: Option<f64>,
    /// Why the cell failed, if it did.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    /// Every grid cell, best first; failed cells come last.
    pub leaderboard: Vec<LeaderboardEntry>,
    /// Grid index of the winner.
    pub best: usize,
}

impl GridSearchResult {
    pub fn best_entry(&self) -> &LeaderboardEntry {
        &self.leaderboard[0]
    }

    /// One row per cell: rank, index, kind, n_params, accuracy, sd_accuracy, error, spec.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "index", "kind", "n_params", "accuracy", "sd_accuracy", "error", "spec"])?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for (rank, e) in self.leaderboard.iter().enumerate() {
            w.write_record([
                (rank + 1).to_string(),
                e.index.to_string(),
                e.spec.name().to_string(),
                opt(e.n_params.map(|v| v.to_string())),
                opt(e.accuracy.map(|v| v.to_string())),
                opt(e.sd_accuracy.map(|v| v.to_string())),
                opt(e.error.clone()),
                serde_json::to_string(&e.spec)?,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every cell of `grid` and ranks them by accuracy, then fewer parameters, then
/// lower grid index. Cells that fail are kept in the leaderboard with their error.
pub fn grid_search(data: &Dataset, grid: &[ModelSpec], selection: Selection, seed: u64) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("the configuration grid is empty".into()));
    }
    let split = match selection {
        Selection::KFold(_) => None,
        Selection::Holdout(f) => Some(stratified_holdout(data.labels(), f, seed)?),
    };
    let mut entries: Vec<LeaderboardEntry> = grid
        .par_iter()
        .enumerate()
        .map(|(index, spec)| {
            let scored = spec.n_params(data).and_then(|n_params| {
                let (accuracy, sd) = match (&split, selection) {
                    (Some((train, test)), _) => {
                        let cm = evaluate_split(data, train, test, spec)?;
                        (cm.correct() as f64 / cm.total() as f64, None)
                    }
                    (None, Selection::KFold(k)) => {
                        let report = kfold_cv(data, k, spec, seed)?;
                        (report.metrics.accuracy, report.metrics.sd_accuracy)
                    }
                    (None, Selection::Holdout(_)) => unreachable!("holdout split is prepared above"),
                };
                Ok((n_params, accuracy, sd))
            });
            match scored {
                Ok((n_params, accuracy, sd)) => LeaderboardEntry {
                    index,
                    spec: spec.clone(),
                    n_params: Some(n_params),
                    accuracy: Some(accuracy),
                    sd_accuracy: sd,
                    error: None,
                },
                Err(e) => LeaderboardEntry {
                    index,
                    spec: spec.clone(),
                    n_params: None,
                    accuracy: None,
                    sd_accuracy: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    entries.sort_by(|a, b| match (a.accuracy, b.accuracy) {
        (Some(x), Some(y)) => y
            .total_cmp(&x)
            .then(a.n_params.cmp(&b.n_params))
            .then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    if entries[0].accuracy.is_none() {
        return Err(Error::InvalidConfig(format!(
            "every grid cell failed; first error: {}",
            entries[0].error.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(GridSearchResult {
        best: entries[0].index,
        leaderboard: entries,
    })
}

/// Settings for repeated simulate–split–fit–score runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateConfig {
    /// Data generator; its `seed` is replaced by `seed + r` for replicate `r`.
    pub scenario: ScenarioSpec,
    /// Observations used for training; the rest form the test set.
    pub n_train: usize,
    pub n_replicates: usize,
    pub seed: u64,
    /// Named models; each is refit per replicate with its seed set to `seed + r`.
    pub models: Vec<(String, ModelSpec)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub model: String,
    /// Test misclassification rate, `None` when the replicate failed.
    pub error: Option<f64>,
    pub metrics: Option<Metrics>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub mean_error: Option<f64>,
    pub sd_error: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub models: Vec<String>,
    /// Replicate-major, models in configuration order.
    pub records: Vec<ReplicateRecord>,
}

impl ReplicateReport {
    /// Test errors of `model` for the replicates that succeeded, in replicate order.
    pub fn errors(&self, model: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.model == model)
            .filter_map(|r| r.error)
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReplicateRecord> {
        self.records.iter().filter(|r| r.failure.is_some())
    }

    pub fn summary(&self) -> Vec<ModelSummary> {
        self.models
            .iter()
            .map(|m| {
                let errors = self.errors(m);
                let n_total = self.records.iter().filter(|r| &r.model == m).count();
                ModelSummary {
                    model: m.clone(),
                    mean_error: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
                    sd_error: sample_sd(&errors),
                    n_ok: errors.len(),
                    n_failed: n_total - errors.len(),
                }
            })
            .collect()
    }

    /// Long format, one row per (replicate, model), ready for boxplots.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replicate", "model", "error", "sensitivity", "specificity", "ppv", "npv", "failure"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let m = r.metrics.as_ref();
            w.write_record([
                r.replicate.to_string(),
                r.model.clone(),
                opt(r.error),
                opt(m.and_then(|m| m.sensitivity)),
                opt(m.and_then(|m| m.specificity)),
                opt(m.and_then(|m| m.ppv)),
                opt(m.and_then(|m| m.npv)),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_replicate(config: &ReplicateConfig, r: usize) -> Vec<ReplicateRecord> {
    let seed = config.seed.wrapping_add(r as u64);
    let scenario = ScenarioSpec {
        seed,
        ..config.scenario.clone()
    };
    let data = scenario.generate().and_then(|data| {
        if config.n_train == 0 || config.n_train >= data.len() {
            return Err(Error::InvalidConfig(format!(
                "n_train {} must leave both sides of the {}-observation split nonempty",
                config.n_train,
                data.len()
            )));
        }
        let train: Vec<usize> = (0..config.n_train).collect();
        let test: Vec<usize> = (config.n_train..data.len()).collect();
        Ok((data, train, test))
    });
    config
        .models
        .iter()
        .map(|(name, spec)| {
            let outcome = data.as_ref().map_err(|e| e.to_string()).and_then(|(data, train, test)| {
                evaluate_split(data, train, test, &spec.with_seed(seed))
                    .and_then(|cm| Metrics::from_confusion(&cm))
                    .map_err(|e| e.to_string())
            });
            match outcome {
                Ok(metrics) => ReplicateRecord {
                    replicate: r,
                    model: name.clone(),
                    error: Some(metrics.mspe),
                    metrics: Some(metrics),
                    failure: None,
                },
                Err(failure) => ReplicateRecord {
                    replicate: r,
                    model: name.clone(),
                    error: None,
                    metrics: None,
                    failure: Some(failure),
                },
            }
        })
        .collect()
}

/// Runs every replicate (in parallel), recording per-replicate failures instead of
/// aborting.
pub fn replicate_harness(config: &ReplicateConfig) -> Result<ReplicateReport> {
    if config.n_replicates == 0 {
        return Err(Error::InvalidConfig("n_replicates must be at least 1".into()));
    }
    if config.models.is_empty() {
        return Err(Error::InvalidConfig("no models to evaluate".into()));
    }
    let records: Vec<Vec<ReplicateRecord>> = (0..config.n_replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect();
    Ok(ReplicateReport {
        models: config.models.iter().map(|(n, _)| n.clone()).collect(),
        records: records.into_iter().flatten().collect(),
    })
}
