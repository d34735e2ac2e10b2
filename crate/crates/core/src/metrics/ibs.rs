use alloc::vec::Vec;

use super::km::{censoring_kaplan_meier, KaplanMeier};
use super::{quantile_sorted, EvalSample};
use crate::error::{Error, Result};
use crate::head::SurvivalCurve;

/// Trapezoids used for the time integral.
pub const IBS_TRAPEZOIDS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Ibs {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Subject-time pairs dropped because the censoring curve was zero.
    pub dropped: usize,
}

/// IPCW Brier score at `t` given the censoring survival curve `g`. Returns
/// the score and the number of subjects dropped for a zero weight.
pub fn brier_score<P: SurvivalCurve>(sample: &EvalSample<P>, g: &KaplanMeier, t: f64) -> Result<(f64, usize)> {
    let g_t = g.at(t);
    let (mut sum, mut count, mut dropped) = (0.0, 0usize, 0usize);
    for i in 0..sample.len() {
        let ti = sample.times[i];
        let s = sample.predictions[i].survival(t);
        if ti <= t && sample.events[i] {
            let w = g.at(ti);
            if w > 0.0 {
                sum += s * s / w;
                count += 1;
            } else {
                dropped += 1;
            }
        } else if ti > t {
            if g_t > 0.0 {
                sum += (1.0 - s) * (1.0 - s) / g_t;
                count += 1;
            } else {
                dropped += 1;
            }
        } else {
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Undefined("every subject dropped from the Brier score"));
    }
    Ok((sum / count as f64, dropped))
}

/// Brier score integrated by the trapezoid rule over `[lower, upper]`
/// (default: 10th to 90th percentile of event times) and divided by the
/// range length. The censoring curve is the KM estimate on the sample.
pub fn integrated_brier_score<P: SurvivalCurve>(sample: &EvalSample<P>, range: Option<(f64, f64)>) -> Result<Ibs> {
    let (lower, upper) = match range {
        Some(r) => r,
        None => {
            let ev = sample.event_times();
            if ev.is_empty() {
                return Err(Error::Undefined("no events"));
            }
            (quantile_sorted(&ev, 0.1), quantile_sorted(&ev, 0.9))
        }
    };
    if !(upper > lower) {
        return Err(Error::Undefined("empty integration range"));
    }
    let g = censoring_kaplan_meier(&sample.times, &sample.events);
    let step = (upper - lower) / IBS_TRAPEZOIDS as f64;
    let mut scores = Vec::with_capacity(IBS_TRAPEZOIDS + 1);
    let mut dropped = 0;
    for k in 0..=IBS_TRAPEZOIDS {
        let t = if k == IBS_TRAPEZOIDS { upper } else { lower + step * k as f64 };
        let (b, d) = brier_score(sample, &g, t)?;
        scores.push(b);
        dropped += d;
    }
    let area: f64 = scores.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
    Ok(Ibs { value: area / (upper - lower), lower, upper, dropped })
}
