use alloc::vec::Vec;

use super::km::kaplan_meier;
use super::EvalSample;
use crate::error::{Error, Result};
use crate::head::SurvivalCurve;

/// Time-dependent C statistic: the KM-weighted mean of AUC(t) over distinct
/// event times up to `horizon` (default: 90th percentile of event times).
///
/// At each such `t`, every subject with an event at `t` is a case and every
/// subject with observed time strictly after `t` is a control; the score is
/// the predicted cumulative hazard at `t`. Weights are `f(t)·S(t)` where `f`
/// is the KM jump at `t`. Times with no controls carry no weight.
pub fn td_c_statistic<P: SurvivalCurve>(sample: &EvalSample<P>, horizon: Option<f64>) -> Result<f64> {
    let horizon = match horizon {
        Some(h) => h,
        None => sample.horizon().ok_or(Error::Undefined("no events"))?,
    };
    let km = kaplan_meier(&sample.times, &sample.events);
    let mut order: Vec<usize> = (0..sample.len()).collect();
    order.sort_by(|&a, &b| sample.times[a].total_cmp(&sample.times[b]));

    let (mut num, mut den) = (0.0, 0.0);
    let mut scores: Vec<f64> = Vec::with_capacity(sample.len());
    let mut i = 0;
    while i < order.len() {
        let t = sample.times[order[i]];
        if t > horizon {
            break;
        }
        let mut j = i;
        while j < order.len() && sample.times[order[j]] == t {
            j += 1;
        }
        let cases: Vec<usize> = order[i..j].iter().copied().filter(|&s| sample.events[s]).collect();
        let controls = &order[j..];
        i = j;
        if cases.is_empty() || controls.is_empty() {
            continue;
        }
        let s = km.at(t);
        let w = (km.before(t) - s) * s;
        if !(w > 0.0) {
            continue;
        }
        scores.clear();
        scores.extend(controls.iter().map(|&c| sample.predictions[c].cumulative_hazard(t)));
        scores.sort_by(f64::total_cmp);
        let mut concordant = 0.0;
        for &c in &cases {
            let r = sample.predictions[c].cumulative_hazard(t);
            let below = scores.partition_point(|&x| x < r);
            let tied = scores.partition_point(|&x| x <= r) - below;
            concordant += below as f64 + 0.5 * tied as f64;
        }
        let auc = concordant / (cases.len() * controls.len()) as f64;
        num += auc * w;
        den += w;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::Undefined("td-C has zero total weight"))
    }
}

/// Harrell's C over comparable pairs `(i, j)` with `T_i < T_j` and `i`
/// uncensored. Higher `risk` means earlier expected event.
pub fn harrell_c(times: &[f64], events: &[bool], risk: &[f64]) -> Result<f64> {
    if times.len() != events.len() || times.len() != risk.len() {
        return Err(Error::shape("times, events, and risk must have equal length"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    // Walk from the latest time down, keeping the risks of subjects strictly
    // later than the current time in a sorted list.
    let mut later: Vec<f64> = Vec::with_capacity(times.len());
    let (mut correct, mut tied, mut total) = (0.0, 0.0, 0.0);
    let mut j = order.len();
    while j > 0 {
        let t = times[order[j - 1]];
        let mut i = j;
        while i > 0 && times[order[i - 1]] == t {
            i -= 1;
        }
        for &s in &order[i..j] {
            if events[s] && !later.is_empty() {
                let r = risk[s];
                let below = later.partition_point(|&x| x < r);
                let eq = later.partition_point(|&x| x <= r) - below;
                correct += below as f64;
                tied += eq as f64;
                total += later.len() as f64;
            }
        }
        for &s in &order[i..j] {
            let pos = later.partition_point(|&x| x < risk[s]);
            later.insert(pos, risk[s]);
        }
        j = i;
    }
    if total > 0.0 {
        Ok((correct + 0.5 * tied) / total)
    } else {
        Err(Error::Undefined("no comparable pairs"))
    }
}

/// Harrell's C with each subject's risk set to its average hazard over
/// `[0, horizon]` (default: 90th percentile of event times).
pub fn harrell_c_average_hazard<P: SurvivalCurve>(sample: &EvalSample<P>, horizon: Option<f64>) -> Result<f64> {
    let horizon = match horizon {
        Some(h) => h,
        None => sample.horizon().ok_or(Error::Undefined("no events"))?,
    };
    let risk: Vec<f64> = sample.predictions.iter().map(|p| p.average_hazard(horizon)).collect();
    harrell_c(&sample.times, &sample.events, &risk)
}
