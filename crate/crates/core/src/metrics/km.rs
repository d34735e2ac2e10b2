use alloc::vec::Vec;

use crate::head::SurvivalCurve;

/// Right-continuous product-limit step function.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier {
    /// Distinct times at which the curve drops (or could drop).
    pub times: Vec<f64>,
    /// Survival just after each of `times`.
    pub survival: Vec<f64>,
}

impl KaplanMeier {
    /// `S(t)`, including the drop at `t` itself.
    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// `S(t-)`, the value just before `t`.
    pub fn before(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

impl SurvivalCurve for KaplanMeier {
    fn survival(&self, t: f64) -> f64 {
        self.at(t)
    }

    fn cumulative_hazard(&self, t: f64) -> f64 {
        -libm::log(self.at(t))
    }
}

fn product_limit(times: &[f64], is_event: impl Fn(usize) -> bool, is_removed_first: impl Fn(usize) -> bool) -> KaplanMeier {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk = times.len() as f64;
    let mut s = 1.0;
    let mut out = KaplanMeier { times: Vec::new(), survival: Vec::new() };
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut j = i;
        let (mut events, mut removed_first, mut total) = (0.0, 0.0, 0.0);
        while j < order.len() && times[order[j]] == t {
            if is_event(order[j]) {
                events += 1.0;
            } else if is_removed_first(order[j]) {
                removed_first += 1.0;
            }
            total += 1.0;
            j += 1;
        }
        let risk = at_risk - removed_first;
        if events > 0.0 {
            s *= 1.0 - events / risk;
            out.times.push(t);
            out.survival.push(s);
        }
        at_risk -= total;
        i = j;
    }
    out
}

/// Kaplan-Meier estimate of the event-time survival function. Tied event
/// times contribute one factor `1 - d/n`; subjects censored at an event
/// time are still at risk there.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> KaplanMeier {
    product_limit(times, |i| events[i], |_| false)
}

/// Kaplan-Meier estimate of the censoring survival function `G`. At tied
/// times, events are taken to happen before censoring, so subjects with an
/// event at `t` are no longer at risk of being censored at `t`.
pub fn censoring_kaplan_meier(times: &[f64], events: &[bool]) -> KaplanMeier {
    product_limit(times, |i| !events[i], |i| events[i])
}
