use super::{Sample, TimeChannel};
use crate::error::{Error, Result};

/// Evenly spaced reference time points covering [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGrid {
    points: Vec<f64>,
}

impl ReferenceGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::config(format!(
                "reference grid needs at least 2 points, got {len}"
            )));
        }
        let last = (len - 1) as f64;
        Ok(ReferenceGrid {
            points: (0..len).map(|k| k as f64 / last).collect(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }
}

/// All observation times of a sample merged into one sorted axis, with a
/// dense value matrix (zeros where unobserved) and an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct UnionGrid {
    pub times: Vec<f64>,
    /// `values[d][u]`
    pub values: Vec<Vec<f64>>,
    /// `observed[d][u]`
    pub observed: Vec<Vec<bool>>,
}

impl UnionGrid {
    pub fn num_channels(&self) -> usize {
        self.values.len()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Union positions of channel `d`'s observations, in observation order.
    pub fn positions(&self, d: usize) -> Vec<usize> {
        self.observed[d]
            .iter()
            .enumerate()
            .filter_map(|(u, &o)| o.then_some(u))
            .collect()
    }

    /// Inverse of [`to_union_grid`].
    pub fn to_channels(&self) -> Vec<TimeChannel> {
        (0..self.num_channels())
            .map(|d| {
                let pos = self.positions(d);
                TimeChannel {
                    times: pos.iter().map(|&u| self.times[u]).collect(),
                    values: pos.iter().map(|&u| self.values[d][u]).collect(),
                }
            })
            .collect()
    }
}

pub fn to_union_grid(s: &Sample) -> UnionGrid {
    let mut times: Vec<f64> = s
        .channels
        .iter()
        .flat_map(|c| c.times.iter().copied())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let u_len = times.len();
    let mut values = vec![vec![0.0; u_len]; s.channels.len()];
    let mut observed = vec![vec![false; u_len]; s.channels.len()];
    for (d, ch) in s.channels.iter().enumerate() {
        // both lists are sorted, so walk them together
        let mut u = 0;
        for (&t, &x) in ch.times.iter().zip(&ch.values) {
            while times[u] < t {
                u += 1;
            }
            values[d][u] = x;
            observed[d][u] = true;
        }
    }
    UnionGrid {
        times,
        values,
        observed,
    }
}
