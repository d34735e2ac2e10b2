//! Evaluation report written by `evaluate` as `report.json` and
//! `report.txt`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub statistic: f64,
    pub bins: usize,
    pub t_eval: f64,
    pub floored_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierScore {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Subjects left out because the censoring survival was zero.
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub delta: f64,
    pub lower: f64,
    pub upper: f64,
    pub redrawn: usize,
}

/// `metric(model) − metric(compare)` over paired resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub compare: String,
    pub replicates: usize,
    pub seed: u64,
    pub td_c: Option<Interval>,
    pub harrell_c: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub task: String,
    pub target_codes: Vec<String>,
    pub mode: String,
    pub split: String,
    pub samples: usize,
    pub events: usize,
    pub horizon_days: Option<f64>,
    pub td_c: Option<f64>,
    pub harrell_c: Option<f64>,
    pub nd_calibration: Option<Calibration>,
    pub ibs: Option<BrierScore>,
    /// td-C of the generator's true hazards on the same samples, when
    /// ground truth is available.
    pub oracle_td_c: Option<f64>,
    pub comparison: Option<Comparison>,
    /// Metrics that could not be computed, with the reason.
    pub undefined: Vec<String>,
    pub conventions: Vec<String>,
}

pub fn conventions() -> Vec<String> {
    [
        "td_c: risk score is the predicted cumulative hazard at t; all events at t are cases, subjects with observed time > t are controls; horizon is the 90th percentile of event times",
        "harrell_c: risk score is the average hazard over [0, horizon]; comparable pairs need the earlier time to be an event",
        "nd_calibration: chi-square over equal-size bins of predicted risk at the median event time",
        "ibs: inverse-probability-of-censoring weighted, integrated between the 10th and 90th percentiles of event times",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_table(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "model     {}", self.model);
        let _ = writeln!(o, "task      {} ({})", self.task, self.target_codes.join(","));
        let _ = writeln!(o, "mode      {}", self.mode);
        let _ = writeln!(o, "split     {}: {} samples, {} events", self.split, self.samples, self.events);
        o.push('\n');
        let _ = writeln!(o, "{:<16} {:>10}", "metric", "value");
        let _ = writeln!(o, "{:<16} {:>10}", "td_c", cell(self.td_c));
        let _ = writeln!(o, "{:<16} {:>10}", "harrell_c", cell(self.harrell_c));
        let _ = writeln!(o, "{:<16} {:>10}", "nd_chi2", cell(self.nd_calibration.as_ref().map(|c| c.statistic)));
        let _ = writeln!(o, "{:<16} {:>10}", "ibs", cell(self.ibs.as_ref().map(|b| b.value)));
        if self.oracle_td_c.is_some() {
            let _ = writeln!(o, "{:<16} {:>10}", "oracle_td_c", cell(self.oracle_td_c));
        }
        if let Some(c) = &self.comparison {
            let _ = writeln!(o, "\npaired bootstrap vs {} ({} replicates)", c.compare, c.replicates);
            let _ = writeln!(o, "{:<16} {:>10} {:>10} {:>10}", "metric", "delta", "lower", "upper");
            for (name, i) in [("td_c", &c.td_c), ("harrell_c", &c.harrell_c)] {
                match i {
                    Some(i) => {
                        let _ = writeln!(o, "{:<16} {:>10.4} {:>10.4} {:>10.4}", name, i.delta, i.lower, i.upper);
                    }
                    None => {
                        let _ = writeln!(o, "{:<16} {:>10}", name, "undefined");
                    }
                }
            }
        }
        for u in &self.undefined {
            let _ = writeln!(o, "note: {u}");
        }
        o
    }
}
