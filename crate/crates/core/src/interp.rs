//! Two-layer semi-parametric interpolation network.
//!
//! The first layer applies three RBF transforms to every channel separately:
//! an intensity (sum of kernel weights), a smooth kernel-weighted average with
//! bandwidth `alpha_d` and a sharper average with bandwidth `kappa * alpha_d`.
//! The second layer mixes the channels' smooth interpolants through a learned
//! correlation matrix, weighted by intensity, and takes the difference between
//! the sharp interpolant and that cross-channel value as the transient output.
//!
//! All sums run over the sample's union-of-timestamps layout with unobserved
//! and held-out entries switched off by a visibility mask.

use serde::{Deserialize, Serialize};

use crate::data::{to_union_grid, MaskAssignment, ReferenceGrid, Sample, TimeChannel};
use crate::error::{Error, Result};

/// Added to the cross-channel intensity normalizer.
pub const EPS: f64 = 1e-8;

pub const DEFAULT_KAPPA: f64 = 10.0;

/// Squared exponential kernel weight.
pub fn kernel_weight(r: f64, t: f64, alpha: f64) -> f64 {
    let d = r - t;
    (-alpha * d * d).exp()
}

/// Sum of kernel weights of the channel's observations at `r`.
pub fn intensity(r: f64, channel: &TimeChannel, alpha: f64) -> f64 {
    channel.times.iter().map(|&t| kernel_weight(r, t, alpha)).sum()
}

/// Kernel-weighted average of the channel's values at `r`, evaluated as a
/// max-shifted softmax over the logits `-alpha (r - t)^2`.
pub fn smooth_interp(r: f64, channel: &TimeChannel, alpha: f64) -> Result<f64> {
    weighted_average(r, &channel.times, &channel.values, alpha).ok_or(Error::NoSupport { channel: 0 })
}

/// [`smooth_interp`] with bandwidth `kappa * alpha`.
pub fn nonsmooth_interp(r: f64, channel: &TimeChannel, alpha: f64, kappa: f64) -> Result<f64> {
    smooth_interp(r, channel, kappa * alpha)
}

fn weighted_average(r: f64, times: &[f64], values: &[f64], alpha: f64) -> Option<f64> {
    let logit = |t: f64| -alpha * (r - t) * (r - t);
    let max = times.iter().map(|&t| logit(t)).fold(f64::NEG_INFINITY, f64::max);
    if times.is_empty() {
        return None;
    }
    let (num, den) = times
        .iter()
        .zip(values)
        .fold((0.0, 0.0), |(num, den), (&t, &x)| {
            let e = (logit(t) - max).exp();
            (num + e * x, den + e)
        });
    Some(num / den)
}

/// Cross-channel value `chi` and transient `tau` for channel `d` at one
/// reference point, given every channel's intensity, smooth and sharp
/// interpolants there. `rho` is row-major `D x D`.
pub fn cross_channel(d: usize, lambda: &[f64], sigma: &[f64], gamma: &[f64], rho: &[f64]) -> (f64, f64) {
    let n = lambda.len();
    let num: f64 = (0..n).map(|e| rho[d * n + e] * lambda[e] * sigma[e]).sum();
    let den: f64 = lambda.iter().sum::<f64>() + EPS;
    let chi = num / den;
    (chi, gamma[d] - chi)
}

/// Trainable interpolation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpParams {
    /// `alpha_d = exp(log_alpha[d])`.
    pub log_alpha: Vec<f64>,
    /// Row-major `D x D` cross-channel correlations.
    pub rho: Vec<f64>,
    /// Bandwidth multiplier of the sharp interpolant; not trained.
    pub kappa: f64,
}

impl InterpParams {
    /// Bandwidths whose kernel half-width spans about three grid steps, and
    /// identity correlations.
    pub fn init(num_channels: usize, grid: &ReferenceGrid, kappa: f64) -> Result<Self> {
        if !(kappa > 1.0) {
            return Err(Error::config(format!("kappa must exceed 1, got {kappa}")));
        }
        let step = 3.0 * grid.spacing();
        let alpha0 = 1.0 / (2.0 * step * step);
        let mut rho = vec![0.0; num_channels * num_channels];
        for d in 0..num_channels {
            rho[d * num_channels + d] = 1.0;
        }
        Ok(InterpParams {
            log_alpha: vec![alpha0.ln(); num_channels],
            rho,
            kappa,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.log_alpha.len()
    }

    pub fn alpha(&self, d: usize) -> f64 {
        self.log_alpha[d].exp()
    }

    pub fn zeros_like(&self) -> Self {
        InterpParams {
            log_alpha: vec![0.0; self.log_alpha.len()],
            rho: vec![0.0; self.rho.len()],
            kappa: self.kappa,
        }
    }
}

/// One of the interpolation network's per-channel outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Output {
    /// Smooth cross-channel interpolant (chi).
    #[serde(rename = "si")]
    SmoothCross,
    /// Transient component (tau).
    #[serde(rename = "t")]
    Transient,
    /// Intensity (lambda).
    #[serde(rename = "i")]
    Intensity,
}

/// Non-empty subset of the outputs fed to the prediction network. Stack rows
/// are laid out in blocks `[chi | tau | lambda]`, skipping unselected blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelSelection {
    pub smooth: bool,
    pub transient: bool,
    pub intensity: bool,
}

impl ChannelSelection {
    pub const ALL: ChannelSelection = ChannelSelection {
        smooth: true,
        transient: true,
        intensity: true,
    };

    pub fn new(smooth: bool, transient: bool, intensity: bool) -> Result<Self> {
        if !(smooth || transient || intensity) {
            return Err(Error::config("channel selection must not be empty"));
        }
        Ok(ChannelSelection {
            smooth,
            transient,
            intensity,
        })
    }

    /// Parses a comma-separated subset of `si`, `t`, `i` (case-insensitive).
    pub fn parse(s: &str) -> Result<Self> {
        let (mut si, mut t, mut i) = (false, false, false);
        for part in s.split(',').map(|p| p.trim().to_ascii_lowercase()) {
            match part.as_str() {
                "si" => si = true,
                "t" => t = true,
                "i" => i = true,
                "" => {}
                other => return Err(Error::config(format!("unknown interpolation output {other:?}"))),
            }
        }
        Self::new(si, t, i)
    }

    /// All seven non-empty subsets in ablation-table order.
    pub fn canonical_order() -> [ChannelSelection; 7] {
        let s = |a, b, c| ChannelSelection {
            smooth: a,
            transient: b,
            intensity: c,
        };
        [
            s(true, true, true),
            s(true, false, true),
            s(true, true, false),
            s(true, false, false),
            s(false, false, true),
            s(false, true, true),
            s(false, true, false),
        ]
    }

    /// Row label of the ablation table, e.g. `SI,T,I` or `I,T`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.smooth {
            parts.push("SI");
        }
        if self.smooth && self.transient {
            parts.push("T");
        }
        if self.intensity {
            parts.push("I");
        }
        if !self.smooth && self.transient {
            parts.push("T");
        }
        parts.join(",")
    }

    pub fn outputs(&self) -> Vec<Output> {
        let mut out = Vec::with_capacity(3);
        if self.smooth {
            out.push(Output::SmoothCross);
        }
        if self.transient {
            out.push(Output::Transient);
        }
        if self.intensity {
            out.push(Output::Intensity);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.outputs().len()
    }
}

impl std::fmt::Display for ChannelSelection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// `(D*C) x T` interpolation output. Stored column-major so that each time
/// slice fed to the recurrent network is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolantStack {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl InterpolantStack {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        InterpolantStack {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a stack from column slices of equal length.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let data: Vec<f64> = columns.into_iter().flatten().collect();
        assert_eq!(data.len(), rows * cols, "ragged columns");
        InterpolantStack { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[col * self.rows + row] = v;
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.cols).map(|k| self.get(row, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A sample in union-of-timestamps layout with its per-entry visibility.
#[derive(Debug, Clone)]
pub struct Observations {
    pub times: Vec<f64>,
    /// `values[d][u]`, zero where not visible.
    pub values: Vec<Vec<f64>>,
    /// Observed and not held out.
    pub visible: Vec<Vec<bool>>,
}

impl Observations {
    pub fn new(s: &Sample, mask: Option<&MaskAssignment>) -> Self {
        let union = to_union_grid(s);
        let mut visible = union.observed.clone();
        if let Some(mask) = mask {
            for (d, held) in mask.held_out.iter().enumerate() {
                let pos = union.positions(d);
                for &j in held {
                    visible[d][pos[j]] = false;
                }
            }
        }
        let values = union
            .values
            .iter()
            .zip(&visible)
            .map(|(row, vis)| row.iter().zip(vis).map(|(&x, &v)| if v { x } else { 0.0 }).collect())
            .collect();
        Observations {
            times: union.times,
            values,
            visible,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.values.len()
    }
}

/// Per-point, per-channel quantities of one evaluation, kept for the
/// reverse pass. All `[k * D + d]`.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub num_channels: usize,
    pub points: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Unnormalized weighted value sum, `lambda * sigma`.
    pub weighted: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub chi: Vec<f64>,
    /// `sum(lambda) + EPS` per point.
    pub norm: Vec<f64>,
    /// Derivatives with respect to `log_alpha[d]`.
    d_lambda: Vec<f64>,
    d_weighted: Vec<f64>,
    d_gamma: Vec<f64>,
}

impl PointEval {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn tau(&self, k: usize, d: usize) -> f64 {
        let i = k * self.num_channels + d;
        self.gamma[i] - self.chi[i]
    }
}

/// Evaluates both interpolation layers at `points`.
pub fn evaluate(params: &InterpParams, obs: &Observations, points: &[f64]) -> Result<PointEval> {
    let dn = obs.num_channels();
    if params.num_channels() != dn {
        return Err(Error::config(format!(
            "parameters expect {} channels, sample has {dn}",
            params.num_channels()
        )));
    }
    for d in 0..dn {
        if !obs.visible[d].iter().any(|&v| v) {
            return Err(Error::NoSupport { channel: d });
        }
    }

    let n = points.len() * dn;
    let mut ev = PointEval {
        num_channels: dn,
        points: points.to_vec(),
        lambda: vec![0.0; n],
        weighted: vec![0.0; n],
        sigma: vec![0.0; n],
        gamma: vec![0.0; n],
        chi: vec![0.0; n],
        norm: vec![0.0; points.len()],
        d_lambda: vec![0.0; n],
        d_weighted: vec![0.0; n],
        d_gamma: vec![0.0; n],
    };

    let mut sq = vec![0.0; obs.times.len()];
    for (k, &r) in points.iter().enumerate() {
        for (u, &t) in obs.times.iter().enumerate() {
            sq[u] = (r - t) * (r - t);
        }
        for d in 0..dn {
            let alpha = params.alpha(d);
            let sharp = params.kappa * alpha;
            let vis = &obs.visible[d];
            let xs = &obs.values[d];

            let mut max_s = f64::NEG_INFINITY;
            let mut max_g = f64::NEG_INFINITY;
            for u in 0..sq.len() {
                if vis[u] {
                    max_s = max_s.max(-alpha * sq[u]);
                    max_g = max_g.max(-sharp * sq[u]);
                }
            }

            let (mut lam, mut wx, mut dlam, mut dwx) = (0.0, 0.0, 0.0, 0.0);
            let (mut es, mut esx) = (0.0, 0.0);
            let (mut eg, mut egx, mut egl, mut egxl) = (0.0, 0.0, 0.0, 0.0);
            for u in 0..sq.len() {
                if !vis[u] {
                    continue;
                }
                let x = xs[u];
                let l = -alpha * sq[u];
                let w = l.exp();
                lam += w;
                wx += w * x;
                dlam += w * l;
                dwx += w * x * l;

                let e = (l - max_s).exp();
                es += e;
                esx += e * x;

                let lg = -sharp * sq[u];
                let e = (lg - max_g).exp();
                eg += e;
                egx += e * x;
                egl += e * lg;
                egxl += e * x * lg;
            }
            let i = k * dn + d;
            let gamma = egx / eg;
            ev.lambda[i] = lam;
            ev.weighted[i] = wx;
            ev.sigma[i] = esx / es;
            ev.gamma[i] = gamma;
            ev.d_lambda[i] = dlam;
            ev.d_weighted[i] = dwx;
            // d gamma / d log_alpha = sum p (x - gamma) lg
            ev.d_gamma[i] = (egxl - gamma * egl) / eg;
        }

        let base = k * dn;
        let norm = ev.lambda[base..base + dn].iter().sum::<f64>() + EPS;
        ev.norm[k] = norm;
        for d in 0..dn {
            let num: f64 = (0..dn)
                .map(|e| params.rho[d * dn + e] * ev.weighted[base + e])
                .sum();
            ev.chi[base + d] = num / norm;
        }
    }
    Ok(ev)
}

/// Adjoints on the outputs of one [`PointEval`], all `[k * D + d]`.
#[derive(Debug, Clone)]
pub struct EvalAdjoint {
    pub chi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl EvalAdjoint {
    pub fn zeros(ev: &PointEval) -> Self {
        let n = ev.lambda.len();
        EvalAdjoint {
            chi: vec![0.0; n],
            gamma: vec![0.0; n],
            lambda: vec![0.0; n],
        }
    }
}

/// Accumulates the parameter gradients of one evaluation into `grad`.
pub fn backward(params: &InterpParams, ev: &PointEval, adj: &EvalAdjoint, grad: &mut InterpParams) {
    let dn = ev.num_channels;
    for k in 0..ev.len() {
        let base = k * dn;
        let norm = ev.norm[k];
        let g_norm: f64 = -(0..dn)
            .map(|d| adj.chi[base + d] * ev.chi[base + d])
            .sum::<f64>()
            / norm;
        for e in 0..dn {
            let i = base + e;
            let g_weighted: f64 = (0..dn)
                .map(|d| adj.chi[base + d] * params.rho[d * dn + e])
                .sum::<f64>()
                / norm;
            let g_lambda = adj.lambda[i] + g_norm;
            grad.log_alpha[e] +=
                g_lambda * ev.d_lambda[i] + g_weighted * ev.d_weighted[i] + adj.gamma[i] * ev.d_gamma[i];
        }
        for d in 0..dn {
            let g = adj.chi[base + d] / norm;
            if g != 0.0 {
                for e in 0..dn {
                    grad.rho[d * dn + e] += g * ev.weighted[base + e];
                }
            }
        }
    }
}

/// Forward pass of the interpolation network on the reference grid.
#[derive(Debug, Clone)]
pub struct InterpTrace {
    pub eval: PointEval,
    pub selection: ChannelSelection,
}

impl InterpTrace {
    pub fn stack(&self) -> InterpolantStack {
        let dn = self.eval.num_channels;
        let outputs = self.selection.outputs();
        let rows = dn * outputs.len();
        let mut stack = InterpolantStack::zeros(rows, self.eval.len());
        for k in 0..self.eval.len() {
            for (b, out) in outputs.iter().enumerate() {
                for d in 0..dn {
                    let i = k * dn + d;
                    let v = match out {
                        Output::SmoothCross => self.eval.chi[i],
                        Output::Transient => self.eval.gamma[i] - self.eval.chi[i],
                        Output::Intensity => self.eval.lambda[i],
                    };
                    stack.set(b * dn + d, k, v);
                }
            }
        }
        stack
    }

    /// Maps an adjoint on the stack back onto the evaluation outputs.
    pub fn stack_adjoint(&self, g_stack: &InterpolantStack) -> EvalAdjoint {
        let dn = self.eval.num_channels;
        let mut adj = EvalAdjoint::zeros(&self.eval);
        for k in 0..self.eval.len() {
            for (b, out) in self.selection.outputs().iter().enumerate() {
                for d in 0..dn {
                    let g = g_stack.get(b * dn + d, k);
                    let i = k * dn + d;
                    match out {
                        Output::SmoothCross => adj.chi[i] += g,
                        Output::Transient => {
                            adj.gamma[i] += g;
                            adj.chi[i] -= g;
                        }
                        Output::Intensity => adj.lambda[i] += g,
                    }
                }
            }
        }
        adj
    }
}

pub fn forward_trace(
    params: &InterpParams,
    s: &Sample,
    grid: &ReferenceGrid,
    selection: ChannelSelection,
    mask: Option<&MaskAssignment>,
) -> Result<InterpTrace> {
    let obs = Observations::new(s, mask);
    Ok(InterpTrace {
        eval: evaluate(params, &obs, grid.points())?,
        selection,
    })
}

/// Interpolation stack of `s` on `grid`. The sample must already have had its
/// empty channels imputed.
pub fn forward(
    params: &InterpParams,
    s: &Sample,
    grid: &ReferenceGrid,
    selection: ChannelSelection,
    mask: Option<&MaskAssignment>,
) -> Result<InterpolantStack> {
    Ok(forward_trace(params, s, grid, selection, mask)?.stack())
}

/// Held-out reconstruction: the cross-channel interpolant of the visible
/// observations evaluated at each query time.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub eval: PointEval,
    /// `(channel, target value)` per query, aligned with `eval.points`.
    pub queries: Vec<(usize, f64)>,
}

impl Reconstruction {
    pub fn predictions(&self) -> Vec<f64> {
        let dn = self.eval.num_channels;
        self.queries
            .iter()
            .enumerate()
            .map(|(q, &(d, _))| self.eval.chi[q * dn + d])
            .collect()
    }

    /// Mean squared reconstruction error; 0 when nothing is held out.
    pub fn loss(&self) -> f64 {
        if self.queries.is_empty() {
            return 0.0;
        }
        let preds = self.predictions();
        let sse: f64 = preds
            .iter()
            .zip(&self.queries)
            .map(|(p, &(_, x))| (p - x) * (p - x))
            .sum();
        sse / self.queries.len() as f64
    }

    /// Adjoint of `scale * loss()` on the evaluation outputs.
    pub fn loss_adjoint(&self, scale: f64) -> EvalAdjoint {
        let mut adj = EvalAdjoint::zeros(&self.eval);
        if self.queries.is_empty() {
            return adj;
        }
        let dn = self.eval.num_channels;
        let c = 2.0 * scale / self.queries.len() as f64;
        for (q, (&(d, x), p)) in self.queries.iter().zip(self.predictions()).enumerate() {
            adj.chi[q * dn + d] += c * (p - x);
        }
        adj
    }
}

/// Predicted values at `(time, channel)` queries from the observations of `s`
/// left visible by `mask`.
pub fn reconstruct_at(
    params: &InterpParams,
    queries: &[(f64, usize)],
    s: &Sample,
    mask: Option<&MaskAssignment>,
) -> Result<Vec<f64>> {
    let obs = Observations::new(s, mask);
    let points: Vec<f64> = queries.iter().map(|&(t, _)| t).collect();
    let ev = evaluate(params, &obs, &points)?;
    let dn = ev.num_channels;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(q, &(_, d))| ev.chi[q * dn + d])
        .collect())
}

/// Reconstruction of every held-out observation of `s` under `mask`.
pub fn reconstruct_held_out(params: &InterpParams, s: &Sample, mask: &MaskAssignment) -> Result<Reconstruction> {
    let obs = Observations::new(s, Some(mask));
    let mut points = Vec::new();
    let mut queries = Vec::new();
    for (d, held) in mask.held_out.iter().enumerate() {
        for &j in held {
            points.push(s.channels[d].times[j]);
            queries.push((d, s.channels[d].values[j]));
        }
    }
    Ok(Reconstruction {
        eval: evaluate(params, &obs, &points)?,
        queries,
    })
}
