//! The full model: a front end producing a dense input sequence (the
//! interpolation network or a discretizing baseline), the GRU and a head.

use serde::{Deserialize, Serialize};

use crate::data::{prepare_sample, ChannelStats, MaskAssignment, ReferenceGrid, Sample, Target, Task};
use crate::error::{Error, Result};
use crate::interp::{self, ChannelSelection, InterpParams, InterpolantStack, Reconstruction};
use crate::predict::{baseline_inputs, logistic, BaselineMode, GruParams, Head};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum FrontEnd {
    Interp {
        params: InterpParams,
        selection: ChannelSelection,
        grid: ReferenceGrid,
    },
    Baseline {
        mode: BaselineMode,
        bins: usize,
    },
}

/// Architecture choices needed to build a fresh model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: Task,
    pub num_channels: usize,
    pub hidden: usize,
    pub refs: usize,
    pub kappa: f64,
    pub selection: ChannelSelection,
    pub baseline: Option<BaselineMode>,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub task: Task,
    pub front: FrontEnd,
    pub gru: GruParams,
    pub head: Head,
    pub stats: ChannelStats,
}

/// A sample turned into what the front end consumes.
#[derive(Debug, Clone)]
pub enum Encoded {
    /// Empty channels imputed and values z-scored.
    Interp(Sample),
    /// Fixed discretized input sequence.
    Baseline(InterpolantStack),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredOutput {
    /// Probability for classification, log-days for regression.
    pub value: f64,
    /// Pre-logistic score for classification, equal to `value` for regression.
    pub score: f64,
}

/// Per-sample loss components.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub prediction: f64,
    pub interpolation: f64,
}

/// Numerically stable `-[y ln p + (1-y) ln(1-p)]` with `p = logistic(z)`.
pub fn cross_entropy_logit(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

impl Model {
    pub fn new(spec: &ModelSpec, stats: ChannelStats, seed: u64) -> Result<Self> {
        if spec.hidden == 0 {
            return Err(Error::config("hidden size must be positive"));
        }
        if stats.num_channels() != spec.num_channels {
            return Err(Error::config("channel statistics do not match the channel count"));
        }
        let mut rng = rng::rng(rng::derive(seed, &[0x1417]));
        let (front, input) = match spec.baseline {
            None => {
                let grid = ReferenceGrid::new(spec.refs)?;
                let params = InterpParams::init(spec.num_channels, &grid, spec.kappa)?;
                (
                    FrontEnd::Interp {
                        params,
                        selection: spec.selection,
                        grid,
                    },
                    spec.num_channels * spec.selection.count(),
                )
            }
            Some(mode) => {
                if spec.bins == 0 {
                    return Err(Error::config("number of bins must be at least 1"));
                }
                (
                    FrontEnd::Baseline {
                        mode,
                        bins: spec.bins,
                    },
                    mode.input_width(spec.num_channels),
                )
            }
        };
        let gru = GruParams::init(input, spec.hidden, &mut rng);
        let head = match spec.task {
            Task::Classification => Head::init_classification(spec.hidden, &mut rng),
            Task::Regression => Head::init_regression(spec.hidden, &mut rng),
        };
        Ok(Model {
            task: spec.task,
            front,
            gru,
            head,
            stats,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.stats.num_channels()
    }

    pub fn interp_params(&self) -> Option<&InterpParams> {
        match &self.front {
            FrontEnd::Interp { params, .. } => Some(params),
            FrontEnd::Baseline { .. } => None,
        }
    }

    pub fn encode(&self, raw: &Sample) -> Result<Encoded> {
        if raw.num_channels() != self.num_channels() {
            return Err(Error::InvalidSample {
                id: raw.id.clone(),
                message: format!(
                    "model expects {} channels, sample has {}",
                    self.num_channels(),
                    raw.num_channels()
                ),
            });
        }
        match &self.front {
            FrontEnd::Interp { .. } => Ok(Encoded::Interp(prepare_sample(raw, &self.stats))),
            FrontEnd::Baseline { mode, bins } => {
                Ok(Encoded::Baseline(baseline_inputs(raw, *mode, *bins, &self.stats)?))
            }
        }
    }

    /// Input sequence of the GRU.
    pub fn input_stack(&self, enc: &Encoded, mask: Option<&MaskAssignment>) -> Result<InterpolantStack> {
        match (&self.front, enc) {
            (FrontEnd::Interp { params, selection, grid }, Encoded::Interp(s)) => {
                interp::forward(params, s, grid, *selection, mask)
            }
            (FrontEnd::Baseline { .. }, Encoded::Baseline(stack)) => Ok(stack.clone()),
            _ => Err(Error::config("encoding does not match the model front end")),
        }
    }

    pub fn predict_encoded(&self, enc: &Encoded) -> Result<PredOutput> {
        let stack = self.input_stack(enc, None)?;
        let trace = self.gru.forward(&stack);
        let h = trace.last();
        Ok(match &self.head {
            Head::Classification(c) => {
                let z = c.logit(h);
                PredOutput {
                    value: logistic(z),
                    score: z,
                }
            }
            Head::Regression(r) => {
                let v = r.regress(h);
                PredOutput { value: v, score: v }
            }
        })
    }

    pub fn predict(&self, raw: &Sample) -> Result<PredOutput> {
        self.predict_encoded(&self.encode(raw)?)
    }

    /// Prediction loss of one sample with no held-out observations.
    pub fn prediction_loss(&self, enc: &Encoded, target: Target) -> Result<f64> {
        let out = self.predict_encoded(enc)?;
        Ok(match self.task {
            Task::Classification => cross_entropy_logit(out.score, target.as_f64()),
            Task::Regression => {
                let r = out.value - target.as_f64();
                r * r
            }
        })
    }

    /// Forward-only counterpart of [`Model::loss_and_grad`].
    pub fn loss_parts(&self, enc: &Encoded, target: Target, mask: Option<&MaskAssignment>) -> Result<LossParts> {
        let stack = self.input_stack(enc, mask)?;
        let trace = self.gru.forward(&stack);
        let h = trace.last();
        let y = target.as_f64();
        let prediction = match &self.head {
            Head::Classification(c) => cross_entropy_logit(c.logit(h), y),
            Head::Regression(r) => {
                let e = r.regress(h) - y;
                e * e
            }
        };
        let interpolation = match (&self.front, enc, mask) {
            (FrontEnd::Interp { params, .. }, Encoded::Interp(s), Some(m)) if m.count() > 0 => {
                interp::reconstruct_held_out(params, s, m)?.loss()
            }
            _ => 0.0,
        };
        Ok(LossParts {
            prediction,
            interpolation,
        })
    }

    /// Loss of one sample and its gradient, scaled by `pred_weight` and
    /// `recon_weight`, accumulated into `grad`. With a mask, held-out points
    /// are hidden from the interpolation network and scored by the
    /// reconstruction term.
    pub fn loss_and_grad(
        &self,
        enc: &Encoded,
        target: Target,
        mask: Option<&MaskAssignment>,
        pred_weight: f64,
        recon_weight: f64,
        grad: &mut Model,
    ) -> Result<LossParts> {
        let (stack, trace_interp) = match (&self.front, enc) {
            (FrontEnd::Interp { params, selection, grid }, Encoded::Interp(s)) => {
                let t = interp::forward_trace(params, s, grid, *selection, mask)?;
                (t.stack(), Some(t))
            }
            (FrontEnd::Baseline { .. }, Encoded::Baseline(stack)) => (stack.clone(), None),
            _ => return Err(Error::config("encoding does not match the model front end")),
        };

        let trace = self.gru.forward(&stack);
        let h = trace.last();
        let y = target.as_f64();
        let (prediction, d_h) = match (&self.head, &mut grad.head) {
            (Head::Classification(c), Head::Classification(gc)) => {
                let z = c.logit(h);
                let d_z = pred_weight * (logistic(z) - y);
                (cross_entropy_logit(z, y), c.backward(h, d_z, gc))
            }
            (Head::Regression(r), Head::Regression(gr)) => {
                let out = r.regress(h);
                let d_out = pred_weight * 2.0 * (out - y);
                ((out - y) * (out - y), r.backward(h, d_out, gr))
            }
            _ => return Err(Error::config("gradient head does not match model head")),
        };

        let d_stack = self
            .gru
            .backward(&stack, &trace, &d_h, &mut grad.gru, trace_interp.is_some());

        let mut interpolation = 0.0;
        if let (Some(t), Some(d_stack)) = (trace_interp, d_stack) {
            let (params, s) = match (&self.front, enc) {
                (FrontEnd::Interp { params, .. }, Encoded::Interp(s)) => (params, s),
                _ => unreachable!(),
            };
            let g_params = match &mut grad.front {
                FrontEnd::Interp { params, .. } => params,
                FrontEnd::Baseline { .. } => {
                    return Err(Error::config("gradient front end does not match model"))
                }
            };
            let adj = t.stack_adjoint(&d_stack);
            interp::backward(params, &t.eval, &adj, g_params);

            if let Some(mask) = mask {
                if mask.count() > 0 {
                    let rec: Reconstruction = interp::reconstruct_held_out(params, s, mask)?;
                    interpolation = rec.loss();
                    if recon_weight != 0.0 {
                        interp::backward(params, &rec.eval, &rec.loss_adjoint(recon_weight), g_params);
                    }
                }
            }
        }

        Ok(LossParts {
            prediction,
            interpolation,
        })
    }

    /// All-zero model of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Model {
        let mut z = self.clone();
        z.visit_mut(|_, v| v.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Visits every trainable tensor as `(name, shape, values)`. Interpolation
    /// tensors come first, so callers can separate them from the prediction
    /// network by prefix.
    pub fn visit<'a>(&'a self, mut f: impl FnMut(&'static str, &[usize], &'a [f64])) {
        if let FrontEnd::Interp { params, .. } = &self.front {
            let d = params.num_channels();
            f("interp.log_alpha", &[d], &params.log_alpha);
            f("interp.rho", &[d, d], &params.rho);
        }
        let (i, h) = (self.gru.input, self.gru.hidden);
        f("gru.w_z", &[h, i], &self.gru.w_z);
        f("gru.w_r", &[h, i], &self.gru.w_r);
        f("gru.w_h", &[h, i], &self.gru.w_h);
        f("gru.u_z", &[h, h], &self.gru.u_z);
        f("gru.u_r", &[h, h], &self.gru.u_r);
        f("gru.u_h", &[h, h], &self.gru.u_h);
        f("gru.b_z", &[h], &self.gru.b_z);
        f("gru.b_r", &[h], &self.gru.b_r);
        f("gru.b_h", &[h], &self.gru.b_h);
        match &self.head {
            Head::Classification(c) => {
                f("head.w", &[h], &c.w);
                f("head.b", &[1], &c.b);
            }
            Head::Regression(r) => {
                f("head.w1", &[r.b1.len(), h], &r.w1);
                f("head.b1", &[r.b1.len()], &r.b1);
                f("head.w2", &[r.w2.len()], &r.w2);
                f("head.b2", &[1], &r.b2);
            }
        }
    }

    /// Mutable counterpart of [`Model::visit`], same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        if let FrontEnd::Interp { params, .. } = &mut self.front {
            f("interp.log_alpha", &mut params.log_alpha);
            f("interp.rho", &mut params.rho);
        }
        let g = &mut self.gru;
        f("gru.w_z", &mut g.w_z);
        f("gru.w_r", &mut g.w_r);
        f("gru.w_h", &mut g.w_h);
        f("gru.u_z", &mut g.u_z);
        f("gru.u_r", &mut g.u_r);
        f("gru.u_h", &mut g.u_h);
        f("gru.b_z", &mut g.b_z);
        f("gru.b_r", &mut g.b_r);
        f("gru.b_h", &mut g.b_h);
        match &mut self.head {
            Head::Classification(c) => {
                f("head.w", &mut c.w);
                f("head.b", &mut c.b);
            }
            Head::Regression(r) => {
                f("head.w1", &mut r.w1);
                f("head.b1", &mut r.b1);
                f("head.w2", &mut r.w2);
                f("head.b2", &mut r.b2);
            }
        }
    }

    /// Flattened trainable values in visit order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(|_, _, v| out.extend_from_slice(v));
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.visit_mut(|_, v| {
            v.copy_from_slice(&values[offset..offset + v.len()]);
            offset += v.len();
        });
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    /// `(||theta||^2, ||phi||^2)`: interpolation and prediction network.
    pub fn squared_norms(&self) -> (f64, f64) {
        let (mut interp, mut pred) = (0.0, 0.0);
        self.visit(|name, _, v| {
            let s: f64 = v.iter().map(|x| x * x).sum();
            if name.starts_with("interp.") {
                interp += s;
            } else {
                pred += s;
            }
        });
        (interp, pred)
    }

    pub fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(|_, _, v| n += v.len());
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TimeChannel;

    fn spec(task: Task, baseline: Option<BaselineMode>) -> ModelSpec {
        ModelSpec {
            task,
            num_channels: 2,
            hidden: 4,
            refs: 6,
            kappa: 10.0,
            selection: ChannelSelection::ALL,
            baseline,
            bins: 5,
        }
    }

    fn sample() -> Sample {
        Sample {
            id: "m".into(),
            channels: vec![
                TimeChannel {
                    times: vec![0.1, 0.4, 0.8],
                    values: vec![1.0, -0.5, 0.3],
                },
                TimeChannel::empty(),
            ],
            target: Target::Label(1),
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Model::new(&spec(Task::Classification, None), ChannelStats::identity(2), 7).unwrap();
        let b = Model::new(&spec(Task::Classification, None), ChannelStats::identity(2), 7).unwrap();
        let c = Model::new(&spec(Task::Classification, None), ChannelStats::identity(2), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn flat_round_trip_and_layout() {
        let m = Model::new(&spec(Task::Regression, None), ChannelStats::identity(2), 1).unwrap();
        let flat = m.flat();
        assert_eq!(flat.len(), m.num_parameters());
        let mut z = m.zeros_like();
        assert!(z.flat().iter().all(|&v| v == 0.0));
        z.set_flat(&flat);
        assert_eq!(z, m);
        let mut names = Vec::new();
        m.visit(|n, _, _| names.push(n.to_string()));
        assert_eq!(names[0], "interp.log_alpha");
        assert_eq!(names.last().unwrap(), "head.b2");
    }

    #[test]
    fn cross_entropy_logit_stable() {
        assert!((cross_entropy_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
        assert!(cross_entropy_logit(800.0, 0.0).is_finite());
        assert!(cross_entropy_logit(-800.0, 1.0).is_finite());
        let z = 0.37;
        let p = logistic(z);
        let direct = -(0.3 * p.ln() + 0.7 * (1.0 - p).ln());
        assert!((cross_entropy_logit(z, 0.3) - direct).abs() < 1e-14);
    }

    #[test]
    fn classification_output_in_open_interval() {
        for baseline in [None, Some(BaselineMode::M), Some(BaselineMode::S)] {
            let m = Model::new(&spec(Task::Classification, baseline), ChannelStats::identity(2), 3).unwrap();
            let p = m.predict(&sample()).unwrap().value;
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn zero_weights_zero_gradient() {
        let m = Model::new(&spec(Task::Classification, None), ChannelStats::identity(2), 3).unwrap();
        let enc = m.encode(&sample()).unwrap();
        let mut g = m.zeros_like();
        m.loss_and_grad(&enc, Target::Label(1), None, 0.0, 0.0, &mut g).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }
}
