use rayon::prelude::*;

use crate::data::{MaskAssignment, Target, Task};
use crate::error::Result;
use crate::interp;
use crate::model::{Encoded, LossParts, Model};
use crate::data::Sample;

/// Weights of the regularizers and of the reconstruction term.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// l2 coefficient on the interpolation parameters.
    pub delta_i: f64,
    /// l2 coefficient on the prediction network parameters.
    pub delta_p: f64,
    /// Weight of the held-out reconstruction loss.
    pub delta_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            delta_i: 1e-5,
            delta_p: 1e-5,
            delta_r: 1.0,
        }
    }
}

/// Cross-entropy for classification, squared error for regression.
pub fn prediction_loss(pred: f64, y: f64, task: Task) -> f64 {
    match task {
        Task::Classification => -(y * pred.ln() + (1.0 - y) * (1.0 - pred).ln()),
        Task::Regression => (pred - y) * (pred - y),
    }
}

/// Mean squared error of the cross-channel reconstruction of every held-out
/// observation; 0 when nothing is held out. `s` is the prepared sample.
pub fn interpolation_loss(s: &Sample, mask: &MaskAssignment, params: &interp::InterpParams) -> Result<f64> {
    if mask.count() == 0 {
        return Ok(0.0);
    }
    Ok(interp::reconstruct_held_out(params, s, mask)?.loss())
}

/// One batch member: encoded input, target and an optional hold-out mask.
pub struct BatchItem<'a> {
    pub input: &'a Encoded,
    pub target: Target,
    pub mask: Option<&'a MaskAssignment>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub prediction: f64,
    pub interpolation: f64,
}

fn combine(model: &Model, parts: &[LossParts], w: &LossWeights) -> BatchLoss {
    let n = parts.len() as f64;
    let prediction = parts.iter().map(|p| p.prediction).sum::<f64>() / n;
    let interpolation = parts.iter().map(|p| p.interpolation).sum::<f64>() / n;
    let (theta, phi) = model.squared_norms();
    BatchLoss {
        total: prediction + w.delta_i * theta + w.delta_p * phi + w.delta_r * interpolation,
        prediction,
        interpolation,
    }
}

/// Composite objective over a batch: mean prediction loss, l2 penalties and
/// the weighted mean reconstruction loss.
pub fn composite_loss(model: &Model, batch: &[BatchItem<'_>], w: &LossWeights) -> Result<BatchLoss> {
    assert!(!batch.is_empty(), "empty batch");
    let parts = batch
        .iter()
        .map(|item| model.loss_parts(item.input, item.target, item.mask))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(model, &parts, w))
}

/// [`composite_loss`] and its gradient. Per-sample work runs in parallel and
/// is reduced in batch order, so the result does not depend on scheduling.
pub fn composite_loss_and_grad(
    model: &Model,
    batch: &[BatchItem<'_>],
    w: &LossWeights,
) -> Result<(BatchLoss, Model)> {
    assert!(!batch.is_empty(), "empty batch");
    let scale = 1.0 / batch.len() as f64;
    let per_sample: Vec<(LossParts, Vec<f64>)> = batch
        .par_iter()
        .map(|item| {
            let mut g = model.zeros_like();
            let parts = model.loss_and_grad(
                item.input,
                item.target,
                item.mask,
                scale,
                w.delta_r * scale,
                &mut g,
            )?;
            Ok((parts, g.flat()))
        })
        .collect::<Result<_>>()?;

    let mut flat = model.flat();
    let params = flat.clone();
    flat.iter_mut().for_each(|v| *v = 0.0);
    for (_, g) in &per_sample {
        for (a, b) in flat.iter_mut().zip(g) {
            *a += b;
        }
    }
    // l2 terms
    let mut offset = 0;
    model.visit(|name, _, v| {
        let delta = if name.starts_with("interp.") { w.delta_i } else { w.delta_p };
        for j in 0..v.len() {
            flat[offset + j] += 2.0 * delta * params[offset + j];
        }
        offset += v.len();
    });

    let parts: Vec<LossParts> = per_sample.iter().map(|(p, _)| *p).collect();
    let mut grad = model.zeros_like();
    grad.set_flat(&flat);
    Ok((combine(model, &parts, w), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_loss_values() {
        for y in [0.0, 1.0] {
            assert!((prediction_loss(0.5, y, Task::Classification) - std::f64::consts::LN_2).abs() < 1e-15);
        }
        assert_eq!(prediction_loss(1.7, 1.7, Task::Regression), 0.0);
        assert_eq!(
            prediction_loss(1.0, 3.0, Task::Regression),
            prediction_loss(5.0, 3.0, Task::Regression)
        );
    }
}
