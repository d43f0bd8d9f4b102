//! Composite-objective training: per-batch mask resampling, Adam, early
//! stopping on a validation split, gradient verification and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA};
pub use gradcheck::{check_gradient, check_gradient_parts, grad_check, random_instance, GradCheckReport, GradInstance};
pub use loss::{
    composite_loss, composite_loss_and_grad, interpolation_loss, prediction_loss, BatchItem, BatchLoss,
    LossWeights,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{global_channel_stats, sample_mask, Dataset, MaskAssignment, Target, Task};
use crate::error::{Error, Result};
use crate::interp::{ChannelSelection, DEFAULT_KAPPA};
use crate::model::{Encoded, Model, ModelSpec};
use crate::predict::BaselineMode;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub mask_fraction: f64,
    pub patience: usize,
    pub seed: u64,
    pub selection: ChannelSelection,
    pub refs: usize,
    pub hidden: usize,
    pub kappa: f64,
    pub weights: LossWeights,
    /// Fraction of the training indices held back for early stopping.
    pub val_fraction: f64,
    /// Global gradient-norm clip threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub baseline: Option<BaselineMode>,
    /// Baseline bins; defaults to `refs`.
    pub bins: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mask_fraction: 0.2,
            patience: 10,
            seed: 0,
            selection: ChannelSelection::ALL,
            refs: 64,
            hidden: 64,
            kappa: DEFAULT_KAPPA,
            weights: LossWeights::default(),
            val_fraction: 0.15,
            clip_norm: Some(100.0),
            baseline: None,
            bins: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::config("epochs, batch size and hidden size must be positive"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::config("Adam betas must lie in [0, 1) and eps must be positive"));
        }
        if !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0) {
            return Err(Error::config("mask fraction must lie in (0, 1)"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("validation fraction must lie in (0, 1)"));
        }
        let w = &self.weights;
        if !(w.delta_i >= 0.0 && w.delta_p >= 0.0 && w.delta_r >= 0.0) {
            return Err(Error::config("loss weights must be >= 0"));
        }
        if self.refs < 2 {
            return Err(Error::config("at least 2 reference points are required"));
        }
        if !(self.kappa > 1.0) {
            return Err(Error::config("kappa must exceed 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("clip norm must be positive"));
            }
        }
        if self.bins == Some(0) {
            return Err(Error::config("number of bins must be at least 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn model_spec(&self, task: Task, num_channels: usize) -> ModelSpec {
        ModelSpec {
            task,
            num_channels,
            hidden: self.hidden,
            refs: self.refs,
            kappa: self.kappa,
            selection: self.selection,
            baseline: self.baseline,
            bins: self.bins.unwrap_or(self.refs),
        }
    }
}

/// Model plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    /// Number of steps whose gradient norm exceeded the clip threshold.
    pub clip_events: usize,
}

impl Trainer {
    pub fn new(model: Model) -> Self {
        let n = model.num_parameters();
        Trainer {
            model,
            adam: AdamState::new(n),
            clip_events: 0,
        }
    }
}

/// Encoded training data with targets and ids.
pub struct EncodedSet {
    pub inputs: Vec<Encoded>,
    pub targets: Vec<Target>,
    pub ids: Vec<String>,
}

impl EncodedSet {
    pub fn new(model: &Model, ds: &Dataset) -> Result<Self> {
        Ok(EncodedSet {
            inputs: ds.samples.iter().map(|s| model.encode(s)).collect::<Result<_>>()?,
            targets: ds.samples.iter().map(|s| s.target).collect(),
            ids: ds.samples.iter().map(|s| s.id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss: BatchLoss,
    pub grad_norm: f64,
    pub clipped: bool,
}

/// Hold-out masks of one batch, drawn from `(epoch_seed, batch_index, id)`.
pub fn batch_masks(
    data: &EncodedSet,
    batch: &[usize],
    fraction: f64,
    epoch_seed: u64,
    batch_index: usize,
) -> Result<Vec<Option<MaskAssignment>>> {
    batch
        .iter()
        .map(|&i| match &data.inputs[i] {
            Encoded::Interp(s) => {
                let seed = rng::derive(epoch_seed, &[batch_index as u64, rng::hash_str(&data.ids[i])]);
                sample_mask(s, fraction, seed).map(Some)
            }
            Encoded::Baseline(_) => Ok(None),
        })
        .collect()
}

/// One optimizer step on `batch` with freshly drawn hold-out masks.
pub fn train_step(
    trainer: &mut Trainer,
    data: &EncodedSet,
    batch: &[usize],
    config: &TrainConfig,
    epoch_seed: u64,
    batch_index: usize,
) -> Result<StepReport> {
    let masks = batch_masks(data, batch, config.mask_fraction, epoch_seed, batch_index)?;
    let items: Vec<BatchItem<'_>> = batch
        .iter()
        .zip(&masks)
        .map(|(&i, m)| BatchItem {
            input: &data.inputs[i],
            target: data.targets[i],
            mask: m.as_ref(),
        })
        .collect();
    let (loss, grad) = composite_loss_and_grad(&trainer.model, &items, &config.weights)?;
    if !loss.total.is_finite() {
        return Err(Error::config(format!("non-finite training loss {}", loss.total)));
    }

    let mut g = grad.flat();
    let grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut clipped = false;
    if let Some(limit) = config.clip_norm {
        if grad_norm > limit {
            let s = limit / grad_norm;
            g.iter_mut().for_each(|v| *v *= s);
            clipped = true;
            trainer.clip_events += 1;
        }
    }
    let mut params = trainer.model.flat();
    adam_step(&mut trainer.adam, &mut params, &g, &config.adam());
    trainer.model.set_flat(&params);
    Ok(StepReport {
        loss,
        grad_norm,
        clipped,
    })
}

/// Mean prediction loss over a set, without hold-out masks.
pub fn mean_prediction_loss(model: &Model, data: &EncodedSet) -> Result<f64> {
    use rayon::prelude::*;
    let losses: Vec<f64> = data
        .inputs
        .par_iter()
        .zip(&data.targets)
        .map(|(x, &y)| model.prediction_loss(x, y))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochLog>,
    pub clip_events: usize,
}

fn check_labels(ds: &Dataset) -> Result<()> {
    if ds.task == Task::Classification {
        if let Some(s) = ds.samples.iter().find(|s| !matches!(s.target, Target::Label(0 | 1))) {
            return Err(Error::InvalidSample {
                id: s.id.clone(),
                message: "training needs binary labels".into(),
            });
        }
    }
    Ok(())
}

/// Trains with early stopping on `val` and returns the best checkpoint.
pub fn fit(train: &Dataset, val: &Dataset, config: &TrainConfig) -> Result<FitResult> {
    fit_with(train, val, config, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.num_channels() != val.num_channels() || train.task != val.task {
        return Err(Error::config("training and validation sets differ in channels or task"));
    }
    check_labels(train)?;
    check_labels(val)?;

    let stats = global_channel_stats(train);
    let model = Model::new(&config.model_spec(train.task, train.num_channels()), stats, config.seed)?;
    let train_set = EncodedSet::new(&model, train)?;
    let val_set = EncodedSet::new(&model, val)?;
    let mut trainer = Trainer::new(model);

    let mut best_model = trainer.model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        let mut shuffle_rng = rng::rng(rng::derive(config.seed, &[0x5e, epoch as u64]));
        order.shuffle(&mut shuffle_rng);
        let epoch_seed = rng::derive(config.seed, &[0xa5, epoch as u64]);

        let mut total = 0.0;
        let mut batches = 0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let report = train_step(&mut trainer, &train_set, batch, config, epoch_seed, b)?;
            total += report.loss.total;
            batches += 1;
        }
        let val_loss = mean_prediction_loss(&trainer.model, &val_set)?;
        let log = EpochLog {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
        };
        on_epoch(&log);
        history.push(log);

        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best_model = trainer.model.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }

    Ok(FitResult {
        checkpoint: Checkpoint {
            model: best_model,
            channel_names: train.channel_names.clone(),
            config: config.clone(),
            best_val_loss: best_loss,
            best_epoch,
        },
        history,
        clip_events: trainer.clip_events,
    })
}
