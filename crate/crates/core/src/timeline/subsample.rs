use alloc::vec::Vec;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensoredLabel {
    pub time: f64,
    pub censored: bool,
}

/// Drops each censored label with probability `drop_fraction`, keeps every
/// uncensored label, then caps the result with a uniform sample of exactly
/// `cap` labels. Kept labels stay in input order.
pub fn subsample_censored<T: Clone>(
    labels: &[T],
    is_censored: impl Fn(&T) -> bool,
    drop_fraction: f64,
    cap: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::invalid("drop fraction must lie in [0, 1)"));
    }
    if cap == 0 {
        return Err(Error::invalid("cap must be at least 1"));
    }
    let mut rng = rng::seeded(seed);
    let mut kept: Vec<usize> = Vec::with_capacity(labels.len());
    for (i, label) in labels.iter().enumerate() {
        if is_censored(label) && drop_fraction > 0.0 && rng.random::<f64>() < drop_fraction {
            continue;
        }
        kept.push(i);
    }
    if kept.len() > cap {
        for i in 0..cap {
            let j = rng.random_range(i..kept.len());
            kept.swap(i, j);
        }
        kept.truncate(cap);
        kept.sort_unstable();
    }
    Ok(kept.into_iter().map(|i| labels[i].clone()).collect())
}
