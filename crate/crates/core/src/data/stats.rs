use serde::{Deserialize, Serialize};

use super::{Dataset, Sample, TimeChannel};

/// Per-channel pooled statistics over a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channel was never observed or had zero spread; `std` was replaced by 1.
    pub degenerate: Vec<bool>,
}

impl ChannelStats {
    /// Stats that leave values unchanged under z-scoring.
    pub fn identity(num_channels: usize) -> Self {
        ChannelStats {
            mean: vec![0.0; num_channels],
            std: vec![1.0; num_channels],
            degenerate: vec![false; num_channels],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.mean.len()
    }

    pub fn zscore(&self, d: usize, x: f64) -> f64 {
        (x - self.mean[d]) / self.std[d]
    }
}

pub fn global_channel_stats(train: &Dataset) -> ChannelStats {
    let d_count = train.num_channels();
    let mut stats = ChannelStats::identity(d_count);
    for d in 0..d_count {
        let values = train
            .samples
            .iter()
            .flat_map(|s| s.channels[d].values.iter().copied());
        let (n, mean, m2) = values.fold((0usize, 0.0f64, 0.0f64), |(n, mean, m2), x| {
            let n = n + 1;
            let delta = x - mean;
            let mean = mean + delta / n as f64;
            (n, mean, m2 + delta * (x - mean))
        });
        if n == 0 {
            stats.degenerate[d] = true;
            continue;
        }
        stats.mean[d] = mean;
        let std = (m2 / n as f64).sqrt();
        if std > 0.0 && std.is_finite() {
            stats.std[d] = std;
        } else {
            stats.degenerate[d] = true;
        }
    }
    stats
}

/// Gives every empty channel a single observation at t = 0 holding the
/// channel's global mean. Non-empty channels are returned untouched.
pub fn impute_empty_channels(s: &Sample, stats: &ChannelStats) -> Sample {
    let mut out = s.clone();
    for (d, ch) in out.channels.iter_mut().enumerate() {
        if ch.is_empty() {
            *ch = TimeChannel {
                times: vec![0.0],
                values: vec![stats.mean[d]],
            };
        }
    }
    out
}

/// Empty-channel imputation followed by z-scoring: the input representation
/// of the interpolation network.
pub fn prepare_sample(s: &Sample, stats: &ChannelStats) -> Sample {
    let mut out = impute_empty_channels(s, stats);
    for (d, ch) in out.channels.iter_mut().enumerate() {
        for x in &mut ch.values {
            *x = stats.zscore(d, *x);
        }
    }
    out
}
