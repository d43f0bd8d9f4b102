use super::{ChannelStats, Sample};
use crate::error::{Error, Result};

/// How empty bins are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillRule {
    /// Carry the last observed value forward; leading empty bins take the
    /// channel's global mean.
    ForwardFill,
    /// Every empty bin takes the channel's global mean.
    GlobalMean,
}

/// Fixed-width binned view of a sample. All matrices are `[d][b]`; values are
/// z-scored, so a global-mean fill is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedFeatures {
    pub values: Vec<Vec<f64>>,
    pub mask: Vec<Vec<f64>>,
    /// Bins elapsed since the previous observed bin (0 for the first bin).
    pub intervals: Vec<Vec<f64>>,
}

impl DiscretizedFeatures {
    pub fn num_bins(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Bin index of a time in [0, 1]; bin `b` covers `[b/B, (b+1)/B)` and the
/// right endpoint 1 falls in the last bin.
fn bin_of(t: f64, bins: usize) -> usize {
    ((t * bins as f64).floor() as usize).min(bins - 1)
}

pub fn discretize_forward_fill(
    s: &Sample,
    bins: usize,
    stats: &ChannelStats,
    rule: FillRule,
) -> Result<DiscretizedFeatures> {
    if bins == 0 {
        return Err(Error::config("number of bins must be at least 1"));
    }
    let d_count = s.num_channels();
    let mut values = vec![vec![0.0; bins]; d_count];
    let mut mask = vec![vec![0.0; bins]; d_count];
    let mut intervals = vec![vec![0.0; bins]; d_count];

    for (d, ch) in s.channels.iter().enumerate() {
        let mut sums = vec![0.0; bins];
        let mut counts = vec![0usize; bins];
        for (&t, &x) in ch.times.iter().zip(&ch.values) {
            let b = bin_of(t, bins);
            sums[b] += stats.zscore(d, x);
            counts[b] += 1;
        }

        let mut last: Option<f64> = None;
        for b in 0..bins {
            if counts[b] > 0 {
                let v = sums[b] / counts[b] as f64;
                values[d][b] = v;
                mask[d][b] = 1.0;
                last = Some(v);
            } else {
                values[d][b] = match rule {
                    FillRule::ForwardFill => last.unwrap_or(0.0),
                    FillRule::GlobalMean => 0.0,
                };
            }
            if b > 0 {
                intervals[d][b] = if mask[d][b - 1] > 0.0 {
                    1.0
                } else {
                    1.0 + intervals[d][b - 1]
                };
            }
        }
    }

    Ok(DiscretizedFeatures {
        values,
        mask,
        intervals,
    })
}
