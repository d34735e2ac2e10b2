use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use crate::head::LabelPolicy;
use crate::rng;
use crate::timeline::{CodeId, EventTimeline, PatientId};

pub const MIN_HISTORY_DAYS: f64 = 365.0;

/// One labelled prediction point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskSample {
    /// Index of the patient in the corpus the task was built from.
    pub patient: usize,
    pub patient_id: PatientId,
    /// Absolute time of the prediction (a visit end).
    pub prediction_time: f64,
    /// Index of the last event at or before the prediction time.
    pub prediction_index: usize,
    /// Delay to the first target occurrence if `event`, else to censoring.
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTask {
    pub target_codes: BTreeSet<CodeId>,
    pub samples: Vec<TaskSample>,
    /// Patients with no visit end after enough history and before censoring.
    pub no_qualifying_visit: usize,
    /// Patients whose first target occurrence is at or before the chosen
    /// prediction time.
    pub prior_occurrence: usize,
}

/// One prediction time per patient: the end of a visit drawn uniformly from
/// those at least `min_history_days` after the first event and before the
/// censoring time. The draw for a patient depends only on `seed` and its id.
pub fn make_task_labels(
    timelines: &[EventTimeline],
    target_codes: &BTreeSet<CodeId>,
    min_history_days: f64,
    seed: u64,
    policy: &LabelPolicy,
) -> TargetTask {
    let mut task = TargetTask { target_codes: target_codes.clone(), samples: Vec::new(), no_qualifying_visit: 0, prior_occurrence: 0 };
    for (patient, tl) in timelines.iter().enumerate() {
        if tl.is_empty() {
            task.no_qualifying_visit += 1;
            continue;
        }
        let censor = policy.censor_time(tl);
        let earliest = tl.start_time() + min_history_days;
        let candidates: Vec<f64> = tl.visits().iter().map(|v| v.end).filter(|&e| e >= earliest && e < censor).collect();
        if candidates.is_empty() {
            task.no_qualifying_visit += 1;
            continue;
        }
        let mut r = rng::substream(seed, tl.patient_id.0);
        let at = candidates[r.random_range(0..candidates.len())];
        let first = tl.events.iter().find(|e| target_codes.contains(&e.code)).map(|e| e.time);
        if matches!(first, Some(f) if f <= at) {
            task.prior_occurrence += 1;
            continue;
        }
        let prediction_index = tl.events.partition_point(|e| e.time <= at) - 1;
        let (time, event) = match first {
            Some(f) if f <= censor => (f - at, true),
            _ => (censor - at, false),
        };
        task.samples.push(TaskSample { patient, patient_id: tl.patient_id, prediction_time: at, prediction_index, time, event });
    }
    task
}
