//! Central finite-difference verification of the analytic gradients.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::loss::{composite_loss, composite_loss_and_grad, BatchItem, LossWeights};
use crate::data::{sample_mask, ChannelStats, MaskAssignment, Sample, Target, Task, TimeChannel};
use crate::error::Result;
use crate::interp::{ChannelSelection, DEFAULT_KAPPA};
use crate::model::{Encoded, FrontEnd, Model, ModelSpec};
use crate::rng;

/// Relative error used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `f` at `x`; returns one
/// relative error per coordinate.
pub fn check_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64], eps: f64) -> Vec<f64> {
    check_gradient_parts(|p| vec![f(p)], &[1.0], x, analytic, eps)
}

/// Like [`check_gradient`] for `f = sum_k weights[k] * parts(x)[k]`. Each part
/// is differenced on its own before weighting, so parts that a coordinate does
/// not affect cancel exactly instead of adding rounding noise.
pub fn check_gradient_parts(
    mut parts: impl FnMut(&[f64]) -> Vec<f64>,
    weights: &[f64],
    x: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + eps;
            let up = parts(&p);
            p[i] = x[i] - eps;
            let down = parts(&p);
            p[i] = x[i];
            let numeric: f64 = weights
                .iter()
                .zip(up.iter().zip(&down))
                .map(|(w, (u, d))| w * (u - d))
                .sum::<f64>()
                / (2.0 * eps);
            relative_error(analytic[i], numeric)
        })
        .collect()
}

/// A model and a batch with fixed hold-out masks.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub model: Model,
    pub inputs: Vec<Encoded>,
    pub targets: Vec<Target>,
    pub masks: Vec<Option<MaskAssignment>>,
}

impl GradInstance {
    fn items(&self) -> Vec<BatchItem<'_>> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .zip(&self.masks)
            .map(|((input, &target), mask)| BatchItem {
                input,
                target,
                mask: mask.as_ref(),
            })
            .collect()
    }
}

/// Random instance with `num_channels` channels of about `obs_per_channel`
/// observations each, a `refs`-point grid and `hidden` GRU units.
pub fn random_instance(
    seed: u64,
    task: Task,
    num_channels: usize,
    refs: usize,
    hidden: usize,
    obs_per_channel: usize,
    num_samples: usize,
) -> Result<GradInstance> {
    let mut rng = rng::rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let spec = ModelSpec {
        task,
        num_channels,
        hidden,
        refs,
        kappa: DEFAULT_KAPPA,
        selection: ChannelSelection::ALL,
        baseline: None,
        bins: refs,
    };
    let mut model = Model::new(&spec, ChannelStats::identity(num_channels), seed)?;
    if let FrontEnd::Interp { params, .. } = &mut model.front {
        for a in &mut params.log_alpha {
            *a += rng.random_range(-0.5..0.5);
        }
        for r in &mut params.rho {
            *r += 0.3 * normal.sample(&mut rng);
        }
    }
    model.visit_mut(|name, v| {
        if name.contains(".b") {
            v.iter_mut().for_each(|x| *x = 0.1 * normal.sample(&mut rng));
        }
    });

    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut masks = Vec::new();
    for n in 0..num_samples {
        let channels = (0..num_channels)
            .map(|_| {
                let len = obs_per_channel + rng.random_range(0..3) - 1;
                let mut times: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
                times.sort_by(f64::total_cmp);
                times.dedup();
                let values = times.iter().map(|_| normal.sample(&mut rng)).collect();
                TimeChannel { times, values }
            })
            .collect();
        let target = match task {
            Task::Classification => Target::Label(rng.random_range(0..2)),
            Task::Regression => Target::Value(normal.sample(&mut rng)),
        };
        let s = Sample {
            id: format!("g{n}"),
            channels,
            target,
        };
        let enc = model.encode(&s)?;
        let mask = match &enc {
            Encoded::Interp(p) => Some(sample_mask(p, 0.2, rng::derive(seed, &[n as u64]))?),
            Encoded::Baseline(_) => None,
        };
        inputs.push(enc);
        targets.push(target);
        masks.push(mask);
    }
    Ok(GradInstance {
        model,
        inputs,
        targets,
        masks,
    })
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub eps: f64,
    /// `(tensor name, parameter count, max relative error)` in visit order.
    pub groups: Vec<(String, usize, f64)>,
    pub max_error: f64,
}

/// Checks the analytic gradient of the full composite loss against central
/// differences for every scalar parameter. Runs single-threaded.
pub fn grad_check(inst: &GradInstance, weights: &LossWeights, eps: f64) -> Result<GradCheckReport> {
    let items = inst.items();
    let (_, grad) = composite_loss_and_grad(&inst.model, &items, weights)?;
    let x = inst.model.flat();
    let analytic = grad.flat();

    let mut probe = inst.model.clone();
    let errors = check_gradient_parts(
        |p| {
            probe.set_flat(p);
            let loss = composite_loss(&probe, &items, weights).expect("loss evaluation on a valid instance");
            let (theta, phi) = probe.squared_norms();
            vec![loss.prediction, loss.interpolation, theta, phi]
        },
        &[1.0, weights.delta_r, weights.delta_i, weights.delta_p],
        &x,
        &analytic,
        eps,
    );

    let mut groups = Vec::new();
    let mut offset = 0;
    inst.model.visit(|name, _, v| {
        let max = errors[offset..offset + v.len()]
            .iter()
            .fold(0.0f64, |m, &e| m.max(e));
        groups.push((name.to_string(), v.len(), max));
        offset += v.len();
    });
    let max_error = errors.iter().fold(0.0f64, |m, &e| m.max(e));
    Ok(GradCheckReport {
        eps,
        groups,
        max_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        // f(x) = sum_i c_i x_i^2 + x_0 x_1
        let c = [1.5, -0.7, 3.0];
        let f = |x: &[f64]| c.iter().zip(x).map(|(c, x)| c * x * x).sum::<f64>() + x[0] * x[1];
        let x = [0.3, -1.2, 2.0];
        let g = [2.0 * c[0] * x[0] + x[1], 2.0 * c[1] * x[1] + x[0], 2.0 * c[2] * x[2]];
        let errs = check_gradient(f, &x, &g, 1e-3);
        assert!(errs.iter().all(|&e| e < 1e-10), "{errs:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 2.1).abs() < 1e-15);
    }
}
