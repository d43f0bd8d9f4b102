//! Scoring trained models: task metrics, the k-fold protocol and the
//! interpolation-output ablation.

pub mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{split_kfold, Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::interp::ChannelSelection;
use crate::model::{Model, PredOutput};
use crate::rng;
use crate::train::{fit, TrainConfig};

pub use metrics::{
    accuracy, auprc, explained_variance, mean_cross_entropy, mean_std, median, median_abs_error,
    median_abs_error_days, roc_auc,
};

/// Metric keys, in table order.
pub const CLASSIFICATION_METRICS: [&str; 3] = ["auc", "auprc", "loss"];
pub const REGRESSION_METRICS: [&str; 2] = ["medae_days", "ev"];

pub type Metrics = BTreeMap<String, f64>;

pub fn metric_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Classification => &CLASSIFICATION_METRICS,
        Task::Regression => &REGRESSION_METRICS,
    }
}

/// Task metrics of predictions against targets. Regression predictions and
/// targets are log-days; the median error is reported in days.
pub fn score_predictions(task: Task, preds: &[PredOutput], targets: &[Target]) -> Result<Metrics> {
    let y: Vec<f64> = targets.iter().map(|t| t.as_f64()).collect();
    let mut m = Metrics::new();
    match task {
        Task::Classification => {
            let labels: Vec<bool> = y.iter().map(|&v| v == 1.0).collect();
            let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
            let probs: Vec<f64> = preds.iter().map(|p| p.value).collect();
            m.insert("auc".into(), roc_auc(&scores, &labels)?);
            m.insert("auprc".into(), auprc(&scores, &labels)?);
            m.insert("loss".into(), mean_cross_entropy(&probs, &labels)?);
        }
        Task::Regression => {
            let p: Vec<f64> = preds.iter().map(|p| p.value).collect();
            m.insert("medae_days".into(), median_abs_error_days(&p, &y)?);
            m.insert("ev".into(), explained_variance(&p, &y)?);
        }
    }
    Ok(m)
}

/// Predictions of `model` for every sample of `ds`, in order.
pub fn predict_all(model: &Model, ds: &Dataset) -> Result<Vec<PredOutput>> {
    ds.samples.par_iter().map(|s| model.predict(s)).collect()
}

pub fn score_model(model: &Model, ds: &Dataset) -> Result<Metrics> {
    if ds.task != model.task {
        return Err(Error::config(format!(
            "model was trained for {}, data is {}",
            model.task, ds.task
        )));
    }
    let preds = predict_all(model, ds)?;
    let targets: Vec<Target> = ds.samples.iter().map(|s| s.target).collect();
    score_predictions(ds.task, &preds, &targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
    /// Population standard deviation over folds.
    pub std: Metrics,
    pub config_fingerprint: String,
}

impl MetricReport {
    pub fn from_folds(task: Task, folds: Vec<Metrics>, config_fingerprint: String) -> Self {
        let mut mean = Metrics::new();
        let mut std = Metrics::new();
        for &name in metric_names(task) {
            let vals: Vec<f64> = folds.iter().filter_map(|f| f.get(name).copied()).collect();
            let (m, s) = mean_std(&vals);
            mean.insert(name.into(), m);
            std.insert(name.into(), s);
        }
        MetricReport {
            task,
            folds,
            mean,
            std,
            config_fingerprint,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Hex SHA-256 of the configuration together with the protocol settings.
pub fn config_fingerprint(config: &TrainConfig, k: usize, seed: u64) -> String {
    #[derive(Serialize)]
    struct Fp<'a> {
        config: &'a TrainConfig,
        k: usize,
        seed: u64,
    }
    let text = serde_json::to_string(&Fp { config, k, seed }).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Stratified k-fold cross-validation. Each fold trains with early stopping
/// on a validation part of its training indices and is scored on its test
/// fold. Folds run concurrently; fold `i` trains with seed
/// `derive(seed, [i])`.
pub fn kfold_evaluate(ds: &Dataset, config: &TrainConfig, k: usize, seed: u64) -> Result<MetricReport> {
    config.validate()?;
    let splits = split_kfold(ds, k, seed, config.val_fraction)?;
    let folds = splits
        .par_iter()
        .enumerate()
        .map(|(i, split)| {
            let cfg = TrainConfig {
                seed: rng::derive(seed, &[i as u64]),
                ..config.clone()
            };
            let result = fit(&ds.subset(&split.train), &ds.subset(&split.validation), &cfg)?;
            score_model(&result.checkpoint.model, &ds.subset(&split.test))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_folds(ds.task, folds, config_fingerprint(config, k, seed)))
}

/// One row of the ablation: a channel subset and one report per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub channels: String,
    pub reports: Vec<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

/// Cross-validates every non-empty subset of the interpolation outputs in
/// the order `SI,T,I`, `SI,I`, `SI,T`, `SI`, `I`, `I,T`, `T`. Each dataset is
/// evaluated separately, so a classification and a regression version of the
/// same cohort fill all metric columns. All rows share the fold splits.
pub fn ablation_suite(datasets: &[&Dataset], config: &TrainConfig, k: usize, seed: u64) -> Result<AblationTable> {
    if datasets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.baseline.is_some() {
        return Err(Error::config("the ablation applies to the interpolation front end only"));
    }
    let rows = ChannelSelection::canonical_order()
        .par_iter()
        .map(|&selection| {
            let cfg = TrainConfig {
                selection,
                ..config.clone()
            };
            let reports = datasets
                .iter()
                .map(|ds| kfold_evaluate(ds, &cfg, k, seed))
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow {
                channels: selection.label(),
                reports,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable { rows })
}

impl AblationTable {
    /// Value of `metric` in a row as `(mean, std)`, if some report has it.
    pub fn cell(row: &AblationRow, metric: &str) -> Option<(f64, f64)> {
        row.reports
            .iter()
            .find_map(|r| Some((*r.mean.get(metric)?, *r.std.get(metric)?)))
    }

    /// Fixed-width text rendering with `mean ± std` cells.
    pub fn to_text(&self) -> String {
        let cols: Vec<&str> = CLASSIFICATION_METRICS
            .iter()
            .chain(&REGRESSION_METRICS)
            .copied()
            .collect();
        let mut out = format!("{:<8}", "subset");
        for c in &cols {
            let _ = write!(out, " {c:>17}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{:<8}", row.channels);
            for c in &cols {
                let cell = match Self::cell(row, c) {
                    Some((m, s)) => format!("{m:.4} ± {s:.4}"),
                    None => "-".into(),
                };
                let _ = write!(out, " {cell:>17}");
            }
            out.push('\n');
        }
        out
    }
}

/// One binary model per class, each trained on `class` versus the rest.
pub fn fit_one_vs_rest(train: &Dataset, val: &Dataset, config: &TrainConfig, num_classes: u32) -> Result<Vec<Model>> {
    (0..num_classes)
        .into_par_iter()
        .map(|c| {
            let cfg = TrainConfig {
                seed: rng::derive(config.seed, &[0x0c, c as u64]),
                ..config.clone()
            };
            Ok(fit(&train.one_vs_rest(c), &val.one_vs_rest(c), &cfg)?.checkpoint.model)
        })
        .collect()
}

/// Class with the highest one-vs-rest score; ties go to the lower class.
pub fn predict_class(models: &[Model], ds: &Dataset) -> Result<Vec<u32>> {
    let scores = models
        .iter()
        .map(|m| predict_all(m, ds))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..ds.len())
        .map(|i| {
            let mut best = 0;
            for c in 1..models.len() {
                if scores[c][i].score > scores[best][i].score {
                    best = c;
                }
            }
            best as u32
        })
        .collect())
}
