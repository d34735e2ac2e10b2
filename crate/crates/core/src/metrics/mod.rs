//! Censoring-aware evaluation metrics.

mod bootstrap;
mod calibration;
mod concordance;
mod ibs;
mod km;

use alloc::vec::Vec;

pub use bootstrap::{paired_bootstrap, BootstrapResult};
pub use calibration::{nd_calibration, NdCalibration, ND_VARIANCE_FLOOR};
pub use concordance::{harrell_c, harrell_c_average_hazard, td_c_statistic};
pub use ibs::{brier_score, integrated_brier_score, Ibs, IBS_TRAPEZOIDS};
pub use km::{censoring_kaplan_meier, kaplan_meier, KaplanMeier};

use crate::error::{Error, Result};

/// Linear-interpolation quantile of an ascending slice (the `(n-1)·q`
/// order-statistic convention).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Observed outcomes and model predictions for the same subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample<P> {
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub predictions: Vec<P>,
}

impl<P> EvalSample<P> {
    pub fn new(times: Vec<f64>, events: Vec<bool>, predictions: Vec<P>) -> Result<Self> {
        if times.len() != events.len() || times.len() != predictions.len() {
            return Err(Error::shape("times, events, and predictions must have equal length"));
        }
        if times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("observed times must be positive"));
        }
        Ok(EvalSample { times, events, predictions })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sorted observed event times (uncensored subjects only).
    pub fn event_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.times.iter().zip(&self.events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    /// 90th percentile of observed event times.
    pub fn horizon(&self) -> Option<f64> {
        let t = self.event_times();
        (!t.is_empty()).then(|| quantile_sorted(&t, 0.9))
    }

}

impl<P: Clone> EvalSample<P> {
    /// Subjects at `indices` (with repetition), in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        EvalSample {
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
            predictions: indices.iter().map(|&i| self.predictions[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests;
