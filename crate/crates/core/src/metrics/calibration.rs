use alloc::vec::Vec;

use super::km::kaplan_meier;
use super::{quantile_sorted, EvalSample};
use crate::error::{Error, Result};
use crate::head::SurvivalCurve;

/// Lower bound on `p̄(1 - p̄)` in a bin's denominator.
pub const ND_VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NdCalibration {
    pub statistic: f64,
    pub t_eval: f64,
    /// Bins whose denominator was raised to [`ND_VARIANCE_FLOOR`].
    pub floored_bins: usize,
}

/// Nam-D'Agostino style calibration statistic at `t_eval` (default: median
/// event time). Subjects are ordered by predicted survival and cut into
/// `bins` groups of (near) equal size; each bin adds
/// `(KM_m - p̄_m)² / (p̄_m (1 - p̄_m))` without a bin-size factor.
pub fn nd_calibration<P: SurvivalCurve>(sample: &EvalSample<P>, bins: usize, t_eval: Option<f64>) -> Result<NdCalibration> {
    let n = sample.len();
    if bins == 0 || n < bins {
        return Err(Error::invalid("need at least one subject per calibration bin"));
    }
    let t_eval = match t_eval {
        Some(t) => t,
        None => {
            let ev = sample.event_times();
            if ev.is_empty() {
                return Err(Error::Undefined("no events"));
            }
            quantile_sorted(&ev, 0.5)
        }
    };
    let predicted: Vec<f64> = sample.predictions.iter().map(|p| p.survival(t_eval)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predicted[a].total_cmp(&predicted[b]));

    let mut statistic = 0.0;
    let mut floored_bins = 0;
    for m in 0..bins {
        let members = &order[m * n / bins..(m + 1) * n / bins];
        let times: Vec<f64> = members.iter().map(|&i| sample.times[i]).collect();
        let events: Vec<bool> = members.iter().map(|&i| sample.events[i]).collect();
        let observed = kaplan_meier(&times, &events).at(t_eval);
        let mean = members.iter().map(|&i| predicted[i]).sum::<f64>() / members.len() as f64;
        let mut var = mean * (1.0 - mean);
        if var < ND_VARIANCE_FLOOR {
            var = ND_VARIANCE_FLOOR;
            floored_bins += 1;
        }
        statistic += (observed - mean) * (observed - mean) / var;
    }
    Ok(NdCalibration { statistic, t_eval, floored_bins })
}
