//! Synthetic irregularly sampled datasets with a known source of label
//! signal, for experiments that do not need restricted clinical data.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, Target, Task, TimeChannel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Label-independent values; observation rates differ by class.
    Intensity,
    /// Class 1 carries a short Gaussian bump on channel 0.
    Transient,
    /// The label is the slope (regression) or slope sign (classification)
    /// of a linear drift added to every channel.
    Trend,
    /// Dense class templates thinned to a kept fraction of their points.
    Subsample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_channels: usize,
    pub num_samples: usize,
    pub label_mode: LabelMode,
    pub task: Task,
    /// Probability that a sample belongs to class 1.
    pub positive_fraction: f64,
    /// Expected observations per channel over the window, per class.
    pub rates: [f64; 2],
    /// Standard deviation of the additive observation noise.
    pub noise: f64,
    /// Amplitude of the smooth background signal.
    pub signal_scale: f64,
    /// Bump height in units of `noise`.
    pub bump_amplitude: f64,
    /// Bump standard deviation in normalized time.
    pub bump_width: f64,
    /// Maximum drift slope over the unit window.
    pub drift: f64,
    /// Points per dense template in subsample mode.
    pub dense_length: usize,
    /// Fraction of dense points kept in subsample mode.
    pub kept_fraction: f64,
    /// Number of template classes in subsample mode.
    pub num_classes: usize,
    pub window_hours: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_channels: 3,
            num_samples: 1000,
            label_mode: LabelMode::Intensity,
            task: Task::Classification,
            positive_fraction: 0.5,
            rates: [30.0, 10.0],
            noise: 0.2,
            signal_scale: 0.3,
            bump_amplitude: 3.0,
            bump_width: 0.03,
            drift: 1.0,
            dense_length: 315,
            kept_fraction: 0.1,
            num_classes: 2,
            window_hours: 48.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_channels < 1 {
            return Err(Error::config("num_channels must be at least 1"));
        }
        if self.num_samples < 1 {
            return Err(Error::config("num_samples must be at least 1"));
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config("sampling rates must be positive"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::config("positive_fraction must lie in (0, 1)"));
        }
        if !(self.noise >= 0.0 && self.signal_scale >= 0.0 && self.bump_amplitude >= 0.0) {
            return Err(Error::config("noise, signal_scale and bump_amplitude must be >= 0"));
        }
        if !(self.bump_width > 0.0 && self.drift >= 0.0) {
            return Err(Error::config("bump_width must be > 0 and drift >= 0"));
        }
        if !(self.window_hours > 0.0) {
            return Err(Error::config("window_hours must be positive"));
        }
        if self.label_mode == LabelMode::Subsample {
            if !(self.kept_fraction > 0.0 && self.kept_fraction <= 1.0) {
                return Err(Error::config("kept_fraction must lie in (0, 1]"));
            }
            if self.dense_length < 2 || self.num_classes < 2 {
                return Err(Error::config("subsample mode needs dense_length >= 2 and num_classes >= 2"));
            }
            if self.task != Task::Classification {
                return Err(Error::config("subsample mode is a classification task"));
            }
        }
        if self.task == Task::Regression && self.label_mode != LabelMode::Trend {
            return Err(Error::config("only trend mode supports regression"));
        }
        Ok(())
    }
}

/// Smooth random signal: a few low-frequency sinusoids.
struct SmoothSignal {
    terms: [(f64, f64, f64); 3],
}

impl SmoothSignal {
    fn draw(rng: &mut rng::Rng, scale: f64) -> Self {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut term = || {
            let amp = scale * normal.sample(rng) / 3f64.sqrt();
            let freq = rng.random_range(0.5..2.0);
            let phase = rng.random_range(0.0..2.0 * PI);
            (amp, freq, phase)
        };
        SmoothSignal {
            terms: [term(), term(), term()],
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, p)| a * (2.0 * PI * f * t + p).sin())
            .sum()
    }
}

fn poisson_times(rng: &mut rng::Rng, rate: f64) -> Vec<f64> {
    let n = Poisson::new(rate).unwrap().sample(rng) as usize;
    let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Dense template of class `c` for channel `d`.
fn template(c: usize, d: usize, t: f64) -> f64 {
    let cycles = 0.5 + (c % 4) as f64 * 0.5;
    let sign = if (c / 4).is_multiple_of(2) { 1.0 } else { -1.0 };
    let phase = (c as f64) * PI / 4.0 + d as f64 * PI / 3.0;
    sign * (2.0 * PI * cycles * t + phase).sin() + 0.5 * sign * (t - 0.5)
}

pub fn synthesize(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let noise = Normal::new(0.0, config.noise.max(f64::MIN_POSITIVE)).unwrap();
    let d_count = config.num_channels;

    let samples = (0..config.num_samples)
        .map(|i| {
            let mut rng = rng::rng(rng::derive(seed, &[i as u64]));
            let class = match config.label_mode {
                LabelMode::Subsample => rng.random_range(0..config.num_classes),
                _ => usize::from(rng.random::<f64>() < config.positive_fraction),
            };
            let mut target = Target::Label(class as u32);

            let channels = loop {
                let channels: Vec<TimeChannel> = match config.label_mode {
                    LabelMode::Intensity => (0..d_count)
                        .map(|_| {
                            let signal = SmoothSignal::draw(&mut rng, config.signal_scale);
                            let times = poisson_times(&mut rng, config.rates[class]);
                            let values = times
                                .iter()
                                .map(|&t| signal.at(t) + config.noise * noise.sample(&mut rng))
                                .collect();
                            TimeChannel { times, values }
                        })
                        .collect(),
                    LabelMode::Transient => {
                        let center = rng.random_range(0.1..0.9);
                        let height = config.bump_amplitude * config.noise;
                        (0..d_count)
                            .map(|d| {
                                let signal = SmoothSignal::draw(&mut rng, config.signal_scale);
                                let times = poisson_times(&mut rng, config.rates[0]);
                                let values = times
                                    .iter()
                                    .map(|&t| {
                                        let mut x =
                                            signal.at(t) + config.noise * noise.sample(&mut rng);
                                        if class == 1 && d == 0 {
                                            let z = (t - center) / config.bump_width;
                                            x += height * (-0.5 * z * z).exp();
                                        }
                                        x
                                    })
                                    .collect();
                                TimeChannel { times, values }
                            })
                            .collect()
                    }
                    LabelMode::Trend => {
                        let slope = match config.task {
                            Task::Regression => {
                                let s = config.drift * rng.random_range(-1.0..1.0);
                                target = Target::Value(s);
                                s
                            }
                            Task::Classification => {
                                if class == 1 {
                                    config.drift
                                } else {
                                    -config.drift
                                }
                            }
                        };
                        (0..d_count)
                            .map(|_| {
                                let signal = SmoothSignal::draw(&mut rng, config.signal_scale);
                                let times = poisson_times(&mut rng, config.rates[0]);
                                let values = times
                                    .iter()
                                    .map(|&t| {
                                        signal.at(t)
                                            + slope * (t - 0.5)
                                            + config.noise * noise.sample(&mut rng)
                                    })
                                    .collect();
                                TimeChannel { times, values }
                            })
                            .collect()
                    }
                    LabelMode::Subsample => {
                        let n = config.dense_length;
                        let keep = ((config.kept_fraction * n as f64).round() as usize).clamp(1, n);
                        let gain = 1.0 + 0.2 * noise_free_normal(&mut rng);
                        let shift = 0.03 * noise_free_normal(&mut rng);
                        (0..d_count)
                            .map(|d| {
                                let mut idx =
                                    rand::seq::index::sample(&mut rng, n, keep).into_vec();
                                idx.sort_unstable();
                                let times: Vec<f64> =
                                    idx.iter().map(|&j| j as f64 / (n - 1) as f64).collect();
                                let values = times
                                    .iter()
                                    .map(|&t| {
                                        gain * template(class, d, (t + shift).clamp(0.0, 1.0))
                                            + config.noise * noise.sample(&mut rng)
                                    })
                                    .collect();
                                TimeChannel { times, values }
                            })
                            .collect()
                    }
                };
                if channels.iter().any(|c| !c.is_empty()) {
                    break channels;
                }
            };

            Sample {
                id: format!("syn{i:05}"),
                channels,
                target,
            }
        })
        .collect();

    Dataset::new(
        samples,
        (0..d_count).map(|d| format!("ch{d}")).collect(),
        config.task,
        config.window_hours,
    )
}

fn noise_free_normal(rng: &mut rng::Rng) -> f64 {
    Normal::new(0.0, 1.0).unwrap().sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_rates_differ_by_class() {
        let cfg = SynthConfig {
            num_samples: 400,
            ..SynthConfig::default()
        };
        let ds = synthesize(&cfg, 11).unwrap();
        let mut totals = [0.0; 2];
        let mut counts = [0.0; 2];
        for s in &ds.samples {
            let c = s.target.label().unwrap() as usize;
            totals[c] += s.num_observations() as f64 / cfg.num_channels as f64;
            counts[c] += 1.0;
        }
        let mean0 = totals[0] / counts[0];
        let mean1 = totals[1] / counts[1];
        assert!((mean0 - 30.0).abs() < 1.5, "{mean0}");
        assert!((mean1 - 10.0).abs() < 1.0, "{mean1}");
        assert!((mean0 / mean1 - 3.0).abs() < 0.4);
    }

    #[test]
    fn same_seed_same_dataset() {
        for mode in [
            LabelMode::Intensity,
            LabelMode::Transient,
            LabelMode::Trend,
            LabelMode::Subsample,
        ] {
            let cfg = SynthConfig {
                num_samples: 20,
                label_mode: mode,
                ..SynthConfig::default()
            };
            let a = synthesize(&cfg, 5).unwrap();
            let b = synthesize(&cfg, 5).unwrap();
            assert_eq!(a, b);
            let mut ba = Vec::new();
            let mut bb = Vec::new();
            super::super::io::write_dataset_to(&a, &mut ba).unwrap();
            super::super::io::write_dataset_to(&b, &mut bb).unwrap();
            assert_eq!(ba, bb);
            assert_ne!(a, synthesize(&cfg, 6).unwrap());
        }
    }

    #[test]
    fn invalid_configs() {
        let bad_rate = SynthConfig {
            rates: [0.0, 10.0],
            ..SynthConfig::default()
        };
        assert!(synthesize(&bad_rate, 1).is_err());
        let no_channels = SynthConfig {
            num_channels: 0,
            ..SynthConfig::default()
        };
        assert!(synthesize(&no_channels, 1).is_err());
        assert!(serde_json::from_str::<SynthConfig>(r#"{"label_mode": "wiggle"}"#).is_err());
    }

    #[test]
    fn subsample_keeps_fraction() {
        let cfg = SynthConfig {
            num_samples: 5,
            num_channels: 1,
            label_mode: LabelMode::Subsample,
            num_classes: 8,
            dense_length: 945,
            ..SynthConfig::default()
        };
        let ds = synthesize(&cfg, 2).unwrap();
        for s in &ds.samples {
            assert_eq!(s.channels[0].len(), 95);
            assert!(s.target.label().unwrap() < 8);
        }
    }

    #[test]
    fn trend_regression_targets() {
        let cfg = SynthConfig {
            num_samples: 50,
            label_mode: LabelMode::Trend,
            task: Task::Regression,
            ..SynthConfig::default()
        };
        let ds = synthesize(&cfg, 3).unwrap();
        assert!(ds
            .samples
            .iter()
            .all(|s| matches!(s.target, Target::Value(v) if v.abs() <= 1.0)));
    }
}
