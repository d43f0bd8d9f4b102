use crate::error::{Error, Result};
use crate::rng;

use super::{Dataset, TimeChannel};

/// Keeps a random `fraction` of each channel's observations (rounded, at
/// least one for a non-empty channel). The draw for a sample depends only on
/// `seed` and its id.
pub fn sparsify(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("sparsify fraction must lie in (0, 1]"));
    }
    let mut out = ds.clone();
    for s in &mut out.samples {
        let mut r = rng::rng(rng::derive(seed, &[rng::hash_str(&s.id)]));
        for ch in &mut s.channels {
            let n = ch.len();
            if n == 0 {
                continue;
            }
            let keep = ((fraction * n as f64).round() as usize).clamp(1, n);
            let mut idx = rand::seq::index::sample(&mut r, n, keep).into_vec();
            idx.sort_unstable();
            *ch = TimeChannel {
                times: idx.iter().map(|&j| ch.times[j]).collect(),
                values: idx.iter().map(|&j| ch.values[j]).collect(),
            };
        }
    }
    Ok(out)
}
