//! Patient event timelines.

mod normalize;
mod split;
mod subsample;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub use normalize::{normalize, NormalizationReport, MIDNIGHT_SHIFT};
pub use split::{assign_split, Split, SplitFractions, SPLIT_HASH_SEED};
pub use subsample::{subsample_censored, CensoredLabel};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeId(pub u32);

impl CodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatientId(pub u64);

/// Interned code symbols. Ids are dense and assigned in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: BTreeMap<String, CodeId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> CodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = CodeId(self.names.len() as u32);
        self.names.push(String::from(name));
        self.index.insert(String::from(name), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<CodeId> {
        self.index.get(name).copied()
    }

    pub fn lookup(&self, name: &str) -> Result<CodeId> {
        self.get(name).ok_or_else(|| Error::UnknownCode(String::from(name)))
    }

    pub fn name(&self, id: CodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CodeId, &str)> {
        self.names.iter().enumerate().map(|(i, n)| (CodeId(i as u32), n.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum EventKind {
    Diagnosis,
    Billing,
    VisitStart,
    VisitEnd,
    #[default]
    Other,
}

impl EventKind {
    /// Unknown kinds map to `Other`.
    pub fn parse(s: &str) -> Self {
        match s {
            "diagnosis" => EventKind::Diagnosis,
            "billing" => EventKind::Billing,
            "visit_start" => EventKind::VisitStart,
            "visit_end" => EventKind::VisitEnd,
            _ => EventKind::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Diagnosis => "diagnosis",
            EventKind::Billing => "billing",
            EventKind::VisitStart => "visit_start",
            EventKind::VisitEnd => "visit_end",
            EventKind::Other => "other",
        }
    }
}

/// One coded event. `time` is in days on an absolute axis; the fractional
/// part is the time of day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub code: CodeId,
    pub kind: EventKind,
}

impl Event {
    pub fn new(time: f64, code: CodeId, kind: EventKind) -> Self {
        Event { time, code, kind }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeline {
    pub patient_id: PatientId,
    pub birth_time: f64,
    pub events: Vec<Event>,
}

/// A closed visit interval reconstructed from visit_start/visit_end events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visit {
    pub start: f64,
    pub end: f64,
}

impl Visit {
    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

impl EventTimeline {
    /// Builds a timeline, stably sorting events by time.
    pub fn new(patient_id: PatientId, birth_time: f64, mut events: Vec<Event>) -> Self {
        sort_events(&mut events);
        EventTimeline { patient_id, birth_time, events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Time of the last recorded event; the record ends there.
    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(self.birth_time, |e| e.time)
    }

    pub fn start_time(&self) -> f64 {
        self.events.first().map_or(self.birth_time, |e| e.time)
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time <= w[1].time)
    }

    /// Pairs visit starts and ends first-in first-out: each end closes the
    /// earliest still-open start at or before it. Starts left open close at
    /// the last event of the record. Ends with no open start are ignored.
    pub fn visits(&self) -> Vec<Visit> {
        let mut starts: Vec<f64> = Vec::new();
        let mut ends: Vec<f64> = Vec::new();
        for e in &self.events {
            match e.kind {
                EventKind::VisitStart => starts.push(e.time),
                EventKind::VisitEnd => ends.push(e.time),
                _ => {}
            }
        }
        starts.sort_by(f64::total_cmp);
        ends.sort_by(f64::total_cmp);
        let mut open: alloc::collections::VecDeque<f64> = alloc::collections::VecDeque::new();
        let mut visits = Vec::new();
        let mut si = 0;
        for &end in &ends {
            while si < starts.len() && starts[si] <= end {
                open.push_back(starts[si]);
                si += 1;
            }
            if let Some(start) = open.pop_front() {
                visits.push(Visit { start, end });
            }
        }
        let last = self.end_time();
        open.extend(starts[si..].iter().copied());
        for start in open {
            visits.push(Visit { start, end: last.max(start) });
        }
        visits.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
        visits
    }
}

pub(crate) fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
}

/// A parsed input record prior to grouping into timelines.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub patient_id: PatientId,
    pub time: f64,
    pub code: CodeId,
    pub kind: EventKind,
    pub birth_time: Option<f64>,
}

/// Groups records by patient and sorts each timeline. Patients are returned
/// in ascending id order. When no record of a patient carries a birth time,
/// the birth time is the day of the earliest event.
pub fn group_records(records: impl IntoIterator<Item = EventRecord>) -> Result<Vec<EventTimeline>> {
    let mut by_patient: BTreeMap<PatientId, (Option<f64>, Vec<Event>)> = BTreeMap::new();
    for r in records {
        let entry = by_patient.entry(r.patient_id).or_insert((None, Vec::new()));
        if let Some(b) = r.birth_time {
            match entry.0 {
                Some(prev) if prev != b => {
                    return Err(Error::invalid(alloc::format!(
                        "patient {} has conflicting birth times {} and {}",
                        r.patient_id.0,
                        prev,
                        b
                    )))
                }
                _ => entry.0 = Some(b),
            }
        }
        entry.1.push(Event::new(r.time, r.code, r.kind));
    }
    Ok(by_patient
        .into_iter()
        .map(|(pid, (birth, events))| {
            let first = events.iter().map(|e| e.time).fold(f64::INFINITY, f64::min);
            let birth = birth.unwrap_or_else(|| libm::floor(first));
            EventTimeline::new(pid, birth, events)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(pid: u64, time: f64, code: u32) -> EventRecord {
        EventRecord { patient_id: PatientId(pid), time, code: CodeId(code), kind: EventKind::Other, birth_time: None }
    }

    #[test]
    fn grouping_sorts_events() {
        let out = group_records(vec![rec(1, 10.0, 0), rec(1, 5.0, 1)]).unwrap();
        assert_eq!(out.len(), 1);
        let times: Vec<f64> = out[0].events.iter().map(|e| e.time).collect();
        assert_eq!(times, vec![5.0, 10.0]);
    }

    #[test]
    fn empty_input_gives_no_timelines() {
        assert!(group_records(Vec::new()).unwrap().is_empty());
    }

    #[test]
    fn conflicting_birth_is_rejected() {
        let mut a = rec(1, 1.0, 0);
        a.birth_time = Some(0.0);
        let mut b = rec(1, 2.0, 0);
        b.birth_time = Some(1.0);
        assert!(group_records(vec![a, b]).is_err());
    }

    #[test]
    fn visits_pair_fifo_and_close_open_starts() {
        let v = CodeId(0);
        let tl = EventTimeline::new(
            PatientId(1),
            0.0,
            vec![
                Event::new(1.0, v, EventKind::VisitStart),
                Event::new(2.0, v, EventKind::VisitStart),
                Event::new(3.0, v, EventKind::VisitEnd),
                Event::new(9.0, v, EventKind::Other),
            ],
        );
        let visits = tl.visits();
        assert_eq!(visits, vec![Visit { start: 1.0, end: 3.0 }, Visit { start: 2.0, end: 9.0 }]);
    }
}
