use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{quantile_sorted, EvalSample};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Metric of A minus metric of B on the full sample.
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
    /// Replicates drawn again because a metric was undefined.
    pub redrawn: usize,
}

/// Paired bootstrap of `metric(A) - metric(B)`: subjects are resampled with
/// replacement and both models are scored on the same draw. The interval is
/// the 2.5/97.5 percentile of the replicate differences. Replicate `r` uses
/// its own stream derived from `seed`, so results do not depend on how
/// replicates are scheduled.
pub fn paired_bootstrap<P, F>(
    a: &EvalSample<P>,
    b: &EvalSample<P>,
    metric: F,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapResult>
where
    P: Clone,
    F: Fn(&EvalSample<P>) -> Result<f64>,
{
    if a.times != b.times || a.events != b.events {
        return Err(Error::invalid("paired bootstrap needs the same subjects for both models"));
    }
    if a.is_empty() || replicates == 0 {
        return Err(Error::invalid("empty sample or zero replicates"));
    }
    let delta = metric(a)? - metric(b)?;
    let n = a.len();
    let max_attempts = 100;
    let mut diffs = Vec::with_capacity(replicates);
    let mut redrawn = 0;
    let mut idx = vec![0usize; n];
    for r in 0..replicates {
        let mut stream = rng::substream(seed, r as u64);
        let mut attempt = 0;
        loop {
            for slot in idx.iter_mut() {
                *slot = stream.random_range(0..n);
            }
            let d = match (metric(&a.select(&idx)), metric(&b.select(&idx))) {
                (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => Some(x - y),
                _ => None,
            };
            if let Some(d) = d {
                diffs.push(d);
                break;
            }
            redrawn += 1;
            attempt += 1;
            if attempt >= max_attempts {
                return Err(Error::Undefined("metric undefined on repeated bootstrap draws"));
            }
        }
    }
    diffs.sort_by(f64::total_cmp);
    Ok(BootstrapResult {
        delta,
        lower: quantile_sorted(&diffs, 0.025),
        upper: quantile_sorted(&diffs, 0.975),
        replicates,
        redrawn,
    })
}
