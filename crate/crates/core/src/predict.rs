//! GRU prediction network, output heads and the discretized inputs of the
//! GRU-M / GRU-F / GRU-S baselines.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{discretize_forward_fill, ChannelStats, FillRule, Sample};
use crate::error::{Error, Result};
use crate::interp::InterpolantStack;
use crate::rng::Rng;

pub const REG_HIDDEN: usize = 50;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn uniform(rng: &mut Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// `out += m * v` for row-major `m` of shape `out.len() x v.len()`.
fn matvec_add(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += m^T * v` for row-major `m` of shape `v.len() x out.len()`.
fn matvec_t_add(out: &mut [f64], m: &[f64], v: &[f64]) {
    let cols = out.len();
    for (&g, row) in v.iter().zip(m.chunks_exact(cols)) {
        if g != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += g * a;
            }
        }
    }
}

/// `m += a b^T` for row-major `m` of shape `a.len() x b.len()`.
fn outer_add(m: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (&x, row) in a.iter().zip(m.chunks_exact_mut(cols)) {
        if x != 0.0 {
            for (o, y) in row.iter_mut().zip(b) {
                *o += x * y;
            }
        }
    }
}

/// Gated recurrent unit. Input matrices are `H x I`, recurrent ones `H x H`,
/// all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub input: usize,
    pub hidden: usize,
    pub w_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_z: Vec<f64>,
    pub u_r: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruParams {
    /// Gate weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        GruParams {
            input,
            hidden,
            w_z: uniform(rng, hidden * input, input),
            w_r: uniform(rng, hidden * input, input),
            w_h: uniform(rng, hidden * input, input),
            u_z: uniform(rng, hidden * hidden, hidden),
            u_r: uniform(rng, hidden * hidden, hidden),
            u_h: uniform(rng, hidden * hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            input,
            hidden,
            w_z: vec![0.0; hidden * input],
            w_r: vec![0.0; hidden * input],
            w_h: vec![0.0; hidden * input],
            u_z: vec![0.0; hidden * hidden],
            u_r: vec![0.0; hidden * hidden],
            u_h: vec![0.0; hidden * hidden],
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    /// One recurrence step: `h = (1 - z) * h_prev + z * tanh(...)`.
    pub fn step(&self, u: &[f64], h_prev: &[f64]) -> Vec<f64> {
        self.step_cached(u, h_prev).h
    }

    fn step_cached(&self, u: &[f64], h_prev: &[f64]) -> StepCache {
        let hn = self.hidden;
        let mut z = self.b_z.clone();
        matvec_add(&mut z, &self.w_z, u);
        matvec_add(&mut z, &self.u_z, h_prev);
        z.iter_mut().for_each(|v| *v = logistic(*v));

        let mut r = self.b_r.clone();
        matvec_add(&mut r, &self.w_r, u);
        matvec_add(&mut r, &self.u_r, h_prev);
        r.iter_mut().for_each(|v| *v = logistic(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut cand = self.b_h.clone();
        matvec_add(&mut cand, &self.w_h, u);
        matvec_add(&mut cand, &self.u_h, &rh);
        cand.iter_mut().for_each(|v| *v = v.tanh());

        let h = (0..hn)
            .map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * cand[j])
            .collect();
        StepCache { z, r, rh, cand, h }
    }

    /// Runs the recurrence over the stack's columns from a zero state.
    pub fn forward(&self, stack: &InterpolantStack) -> GruTrace {
        let mut steps = Vec::with_capacity(stack.cols());
        let mut h = vec![0.0; self.hidden];
        for k in 0..stack.cols() {
            let c = self.step_cached(stack.column(k), &h);
            h = c.h.clone();
            steps.push(c);
        }
        GruTrace { steps }
    }

    /// Backpropagation through time from an adjoint on the final hidden
    /// state. Parameter gradients are accumulated into `grad`; the input
    /// adjoint is returned when `want_input` is set.
    pub fn backward(
        &self,
        stack: &InterpolantStack,
        trace: &GruTrace,
        d_last: &[f64],
        grad: &mut GruParams,
        want_input: bool,
    ) -> Option<InterpolantStack> {
        let hn = self.hidden;
        let mut d_input = want_input.then(|| InterpolantStack::zeros(stack.rows(), stack.cols()));
        let zero = vec![0.0; hn];
        let mut dh = d_last.to_vec();
        let mut d_pre_z = vec![0.0; hn];
        let mut d_pre_r = vec![0.0; hn];
        let mut d_pre_h = vec![0.0; hn];
        let mut du = vec![0.0; self.input];

        for k in (0..trace.steps.len()).rev() {
            let c = &trace.steps[k];
            let h_prev = if k == 0 { &zero } else { &trace.steps[k - 1].h };
            let u = stack.column(k);

            let mut dh_prev: Vec<f64> = (0..hn).map(|j| dh[j] * (1.0 - c.z[j])).collect();
            for j in 0..hn {
                let dz = dh[j] * (c.cand[j] - h_prev[j]);
                d_pre_z[j] = dz * c.z[j] * (1.0 - c.z[j]);
                let dc = dh[j] * c.z[j];
                d_pre_h[j] = dc * (1.0 - c.cand[j] * c.cand[j]);
            }

            let mut d_rh = vec![0.0; hn];
            matvec_t_add(&mut d_rh, &self.u_h, &d_pre_h);
            for j in 0..hn {
                let dr = d_rh[j] * h_prev[j];
                dh_prev[j] += d_rh[j] * c.r[j];
                d_pre_r[j] = dr * c.r[j] * (1.0 - c.r[j]);
            }
            matvec_t_add(&mut dh_prev, &self.u_z, &d_pre_z);
            matvec_t_add(&mut dh_prev, &self.u_r, &d_pre_r);

            outer_add(&mut grad.w_z, &d_pre_z, u);
            outer_add(&mut grad.w_r, &d_pre_r, u);
            outer_add(&mut grad.w_h, &d_pre_h, u);
            outer_add(&mut grad.u_z, &d_pre_z, h_prev);
            outer_add(&mut grad.u_r, &d_pre_r, h_prev);
            outer_add(&mut grad.u_h, &d_pre_h, &c.rh);
            for j in 0..hn {
                grad.b_z[j] += d_pre_z[j];
                grad.b_r[j] += d_pre_r[j];
                grad.b_h[j] += d_pre_h[j];
            }

            if let Some(di) = d_input.as_mut() {
                du.iter_mut().for_each(|v| *v = 0.0);
                matvec_t_add(&mut du, &self.w_z, &d_pre_z);
                matvec_t_add(&mut du, &self.w_r, &d_pre_r);
                matvec_t_add(&mut du, &self.w_h, &d_pre_h);
                for (row, &g) in du.iter().enumerate() {
                    di.set(row, k, g);
                }
            }
            dh = dh_prev;
        }
        d_input
    }
}

#[derive(Debug, Clone)]
struct StepCache {
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
    h: Vec<f64>,
}

/// Recorded hidden states and gate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct GruTrace {
    steps: Vec<StepCache>,
}

impl GruTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn hidden(&self, k: usize) -> &[f64] {
        &self.steps[k].h
    }

    pub fn last(&self) -> &[f64] {
        &self.steps.last().expect("at least one step").h
    }
}

/// Logistic output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHead {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ClassHead {
    pub fn logit(&self, h: &[f64]) -> f64 {
        self.b[0] + self.w.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn classify(&self, h: &[f64]) -> f64 {
        logistic(self.logit(h))
    }

    /// Accumulates gradients for an adjoint on the logit; returns the adjoint
    /// on `h`.
    pub fn backward(&self, h: &[f64], d_logit: f64, grad: &mut ClassHead) -> Vec<f64> {
        grad.b[0] += d_logit;
        for (g, x) in grad.w.iter_mut().zip(h) {
            *g += d_logit * x;
        }
        self.w.iter().map(|w| w * d_logit).collect()
    }
}

/// Dense rectified layer of [`REG_HIDDEN`] units followed by a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegHead {
    /// `REG_HIDDEN x H`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl RegHead {
    fn hidden_act(&self, h: &[f64]) -> Vec<f64> {
        let mut a = self.b1.clone();
        matvec_add(&mut a, &self.w1, h);
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        a
    }

    pub fn regress(&self, h: &[f64]) -> f64 {
        let a = self.hidden_act(h);
        self.b2[0] + self.w2.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn backward(&self, h: &[f64], d_out: f64, grad: &mut RegHead) -> Vec<f64> {
        let a = self.hidden_act(h);
        grad.b2[0] += d_out;
        let mut d_pre = vec![0.0; a.len()];
        for j in 0..a.len() {
            grad.w2[j] += d_out * a[j];
            // inactive units pass no gradient
            d_pre[j] = if a[j] > 0.0 { d_out * self.w2[j] } else { 0.0 };
            grad.b1[j] += d_pre[j];
        }
        outer_add(&mut grad.w1, &d_pre, h);
        let mut dh = vec![0.0; h.len()];
        matvec_t_add(&mut dh, &self.w1, &d_pre);
        dh
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Head {
    Classification(ClassHead),
    Regression(RegHead),
}

impl Head {
    pub fn init_classification(hidden: usize, rng: &mut Rng) -> Self {
        Head::Classification(ClassHead {
            w: uniform(rng, hidden, hidden),
            b: vec![0.0],
        })
    }

    pub fn init_regression(hidden: usize, rng: &mut Rng) -> Self {
        Head::Regression(RegHead {
            w1: uniform(rng, REG_HIDDEN * hidden, hidden),
            b1: vec![0.0; REG_HIDDEN],
            w2: uniform(rng, REG_HIDDEN, REG_HIDDEN),
            b2: vec![0.0],
        })
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Head::Classification(c) => Head::Classification(ClassHead {
                w: vec![0.0; c.w.len()],
                b: vec![0.0],
            }),
            Head::Regression(r) => Head::Regression(RegHead {
                w1: vec![0.0; r.w1.len()],
                b1: vec![0.0; r.b1.len()],
                w2: vec![0.0; r.w2.len()],
                b2: vec![0.0],
            }),
        }
    }

    /// Probability for classification, log-days for regression.
    pub fn output(&self, h: &[f64]) -> f64 {
        match self {
            Head::Classification(c) => c.classify(h),
            Head::Regression(r) => r.regress(h),
        }
    }
}

/// Front end of the GRU baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    /// Empty bins take the global mean.
    M,
    /// Empty bins carry the last observation forward.
    F,
    /// Mean-filled values, observation mask and time since last observation.
    S,
}

impl BaselineMode {
    pub fn parse(s: &str) -> Result<Option<Self>> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(None),
            "m" => Ok(Some(BaselineMode::M)),
            "f" => Ok(Some(BaselineMode::F)),
            "s" => Ok(Some(BaselineMode::S)),
            other => Err(Error::config(format!("unknown baseline {other:?}"))),
        }
    }

    pub fn input_width(&self, num_channels: usize) -> usize {
        match self {
            BaselineMode::M | BaselineMode::F => num_channels,
            BaselineMode::S => 3 * num_channels,
        }
    }
}

/// Dense `width x bins` input sequence of a baseline, from a raw sample.
pub fn baseline_inputs(
    s: &Sample,
    mode: BaselineMode,
    bins: usize,
    stats: &ChannelStats,
) -> Result<InterpolantStack> {
    let rule = match mode {
        BaselineMode::F => FillRule::ForwardFill,
        BaselineMode::M | BaselineMode::S => FillRule::GlobalMean,
    };
    let f = discretize_forward_fill(s, bins, stats, rule)?;
    let blocks: Vec<&Vec<Vec<f64>>> = match mode {
        BaselineMode::M | BaselineMode::F => vec![&f.values],
        BaselineMode::S => vec![&f.values, &f.mask, &f.intervals],
    };
    let columns = (0..bins)
        .map(|b| {
            blocks
                .iter()
                .flat_map(|block| block.iter().map(move |row| row[b]))
                .collect()
        })
        .collect();
    Ok(InterpolantStack::from_columns(columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Target, TimeChannel};
    use crate::rng;

    #[test]
    fn zero_params_step() {
        let g = GruParams::zeros(3, 2);
        let h = g.step(&[0.4, -1.0, 2.0], &[1.0, -2.0]);
        assert_eq!(h, vec![0.5, -1.0]);
    }

    #[test]
    fn autonomous_when_input_weights_vanish() {
        let mut rng = rng::rng(1);
        let mut g = GruParams::init(4, 3, &mut rng);
        g.w_z.iter_mut().for_each(|v| *v = 0.0);
        g.w_r.iter_mut().for_each(|v| *v = 0.0);
        g.w_h.iter_mut().for_each(|v| *v = 0.0);
        let h = [0.3, -0.2, 0.9];
        assert_eq!(g.step(&[1.0, 2.0, 3.0, 4.0], &h), g.step(&[0.0; 4], &h));
    }

    #[test]
    fn step_is_bounded() {
        let mut rng = rng::rng(2);
        for _ in 0..50 {
            let mut g = GruParams::init(3, 5, &mut rng);
            g.w_h.iter_mut().for_each(|v| *v *= 20.0);
            let h: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let next = g.step(&u, &h);
            for (a, b) in next.iter().zip(&h) {
                assert!(a.abs() <= b.abs().max(1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn long_sequence_stays_finite_and_order_matters() {
        let mut rng = rng::rng(3);
        let g = GruParams::init(4, 8, &mut rng);
        let cols: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let stack = InterpolantStack::from_columns(cols.clone());
        let last = g.forward(&stack).last().to_vec();
        assert!(last.iter().all(|v| v.is_finite() && v.abs() <= 1.0));

        let short = InterpolantStack::from_columns(cols[..5].to_vec());
        let mut rev = cols[..5].to_vec();
        rev.reverse();
        let a = g.forward(&short).last().to_vec();
        let b = g.forward(&InterpolantStack::from_columns(rev)).last().to_vec();
        assert_ne!(a, b);
        assert_eq!(g.forward(&InterpolantStack::from_columns(vec![cols[0].clone()])).len(), 1);
    }

    #[test]
    fn single_unit_bias_gradient_by_hand() {
        // H = I = 1, one step from h0 = 0:
        // z = s(w_z u + b_z), c = tanh(w_h u + b_h), h = z c
        // dh/db_z = c z (1 - z)
        let mut g = GruParams::zeros(1, 1);
        g.w_z = vec![0.7];
        g.b_z = vec![-0.2];
        g.w_h = vec![1.3];
        g.b_h = vec![0.1];
        let u = 0.5;
        let stack = InterpolantStack::from_columns(vec![vec![u]]);
        let trace = g.forward(&stack);
        let mut grad = GruParams::zeros(1, 1);
        g.backward(&stack, &trace, &[1.0], &mut grad, false);
        let z = logistic(0.7 * u - 0.2);
        let c = (1.3 * u + 0.1f64).tanh();
        assert!((trace.last()[0] - z * c).abs() < 1e-15);
        assert!((grad.b_z[0] - c * z * (1.0 - z)).abs() < 1e-15);
        assert!((grad.b_h[0] - z * (1.0 - c * c)).abs() < 1e-15);
        assert_eq!(grad.b_r[0], 0.0);
    }

    #[test]
    fn zero_adjoint_gives_zero_gradient() {
        let mut rng = rng::rng(4);
        let g = GruParams::init(2, 3, &mut rng);
        let stack = InterpolantStack::from_columns(vec![vec![0.1, 0.2], vec![-0.3, 0.4]]);
        let trace = g.forward(&stack);
        let mut grad = GruParams::zeros(2, 3);
        let di = g.backward(&stack, &trace, &[0.0; 3], &mut grad, true).unwrap();
        assert!(grad.w_z.iter().chain(&grad.u_h).chain(&grad.b_r).all(|&v| v == 0.0));
        assert!(di.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heads() {
        let c = ClassHead {
            w: vec![0.0; 4],
            b: vec![0.0],
        };
        assert_eq!(c.classify(&[1.0, 2.0, 3.0, 4.0]), 0.5);
        let big = ClassHead {
            w: vec![0.0],
            b: vec![800.0],
        };
        assert_eq!(big.classify(&[0.0]), 1.0);
        let lo = ClassHead { w: vec![1.0], b: vec![-1.0] }.classify(&[0.2]);
        let hi = ClassHead { w: vec![1.0], b: vec![1.0] }.classify(&[0.2]);
        assert!(lo < hi && lo > 0.0 && hi < 1.0);

        let mut rng = rng::rng(5);
        let zero = Head::init_regression(4, &mut rng).zeros_like();
        assert_eq!(zero.output(&[1.0, -1.0, 2.0, 0.5]), 0.0);

        // output is linear in w2
        if let Head::Regression(r) = Head::init_regression(4, &mut rng) {
            let h = [0.3, -0.7, 0.2, 0.9];
            let mut r2 = r.clone();
            r2.w2.iter_mut().for_each(|w| *w *= 2.0);
            assert!((r2.regress(&h) - 2.0 * r.regress(&h)).abs() < 1e-12);

            // inactive units get no gradient
            let mut grad = match Head::Regression(r.clone()).zeros_like() {
                Head::Regression(g) => g,
                _ => unreachable!(),
            };
            r.backward(&h, 1.0, &mut grad);
            let act = r.hidden_act(&h);
            for j in 0..REG_HIDDEN {
                if act[j] == 0.0 {
                    assert_eq!(grad.b1[j], 0.0);
                    assert!(grad.w1[j * 4..(j + 1) * 4].iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn baseline_widths_and_fill() {
        let s = Sample {
            id: "b".into(),
            channels: vec![
                TimeChannel {
                    times: vec![0.6],
                    values: vec![4.0],
                },
                TimeChannel::empty(),
            ],
            target: Target::Label(0),
        };
        let st = ChannelStats::identity(2);
        let m = baseline_inputs(&s, BaselineMode::M, 4, &st).unwrap();
        assert_eq!(m.shape(), (2, 4));
        assert_eq!(m.row(0), vec![0.0, 0.0, 4.0, 0.0]);
        assert_eq!(m.row(1), vec![0.0; 4]);
        let f = baseline_inputs(&s, BaselineMode::F, 4, &st).unwrap();
        assert_eq!(f.row(0), vec![0.0, 0.0, 4.0, 4.0]);
        let sm = baseline_inputs(&s, BaselineMode::S, 4, &st).unwrap();
        assert_eq!(sm.shape(), (6, 4));
        assert_eq!(sm.row(2), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(sm.row(4), vec![0.0, 1.0, 2.0, 1.0]);
        assert_eq!(BaselineMode::parse("none").unwrap(), None);
        assert!(BaselineMode::parse("d").is_err());
    }
}
