use rand::seq::index;

use super::Sample;
use crate::error::{Error, Result};
use crate::rng;

/// Observations held out from the interpolation network and scored by the
/// reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskAssignment {
    /// Sorted held-out observation indices per channel.
    pub held_out: Vec<Vec<usize>>,
    pub fraction: f64,
    pub seed: u64,
}

impl MaskAssignment {
    /// Assignment holding nothing out.
    pub fn none(num_channels: usize) -> Self {
        MaskAssignment {
            held_out: vec![Vec::new(); num_channels],
            fraction: 0.0,
            seed: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.held_out.iter().map(Vec::len).sum()
    }

    /// Per-channel visibility flags for a sample with the given channel lengths.
    pub fn visibility(&self, lengths: &[usize]) -> Vec<Vec<bool>> {
        lengths
            .iter()
            .zip(&self.held_out)
            .map(|(&len, held)| {
                let mut vis = vec![true; len];
                for &j in held {
                    vis[j] = false;
                }
                vis
            })
            .collect()
    }
}

/// Number of observations held out of a channel of length `len`.
pub(crate) fn held_out_count(fraction: f64, len: usize) -> usize {
    if len < 2 {
        return 0;
    }
    ((fraction * len as f64).round() as usize).min(len - 1)
}

pub fn sample_mask(s: &Sample, fraction: f64, seed: u64) -> Result<MaskAssignment> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!(
            "mask fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = rng::rng(seed);
    let held_out = s
        .channels
        .iter()
        .map(|ch| {
            let count = held_out_count(fraction, ch.len());
            let mut idx = index::sample(&mut rng, ch.len(), count).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    Ok(MaskAssignment {
        held_out,
        fraction,
        seed,
    })
}
