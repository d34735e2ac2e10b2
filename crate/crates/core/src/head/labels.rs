use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::grid::PieceGrid;
use crate::error::{Error, Result};
use crate::ontology::TaskSet;
use crate::timeline::{CodeId, EventTimeline};

/// A sparse deviation from the default (censored) label of one
/// `(event, task, piece)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseEntry {
    pub event: u32,
    pub task: u32,
    pub piece: u32,
    /// Days spent in the piece: time of the event within the piece for event
    /// entries, replacement exposure for overrides.
    pub time: f64,
}

/// Sparse time-to-event labels for a block of prediction events.
///
/// The default for every `(event, task, piece)` is "censored with exposure
/// `default_exposure[event, piece]`". Event entries mark the piece where the
/// task's code next occurs (δ = 1) with the within-piece time; overrides set
/// the exposure of later pieces of the same `(event, task)` to zero. Both
/// lists are sorted by `(event, piece, task)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurvivalBatch {
    pub num_events: usize,
    pub num_tasks: usize,
    pub num_pieces: usize,
    pub default_exposure: Vec<f64>,
    pub event_entries: Vec<SparseEntry>,
    pub censor_overrides: Vec<SparseEntry>,
    /// Prediction events at or after their censoring time; their rows are
    /// all-zero exposure.
    pub skipped: usize,
}

impl SurvivalBatch {
    pub fn empty(num_tasks: usize, num_pieces: usize) -> Self {
        SurvivalBatch { num_tasks, num_pieces, ..Default::default() }
    }

    /// Appends `other`'s events after this batch's events.
    pub fn append(&mut self, other: &SurvivalBatch) -> Result<()> {
        if other.num_tasks != self.num_tasks || other.num_pieces != self.num_pieces {
            return Err(Error::shape("cannot append batches with different task or piece counts"));
        }
        let offset = self.num_events as u32;
        let shift = |e: &SparseEntry| SparseEntry { event: e.event + offset, ..*e };
        self.default_exposure.extend_from_slice(&other.default_exposure);
        self.event_entries.extend(other.event_entries.iter().map(shift));
        self.censor_overrides.extend(other.censor_overrides.iter().map(shift));
        self.num_events += other.num_events;
        self.skipped += other.skipped;
        Ok(())
    }

    pub fn num_observed_events(&self) -> usize {
        self.event_entries.len()
    }

    /// Checks the structural invariants: shapes, sort order, at most one
    /// event per `(event, task)`, and `time <= piece width`.
    pub fn validate(&self, grid: &PieceGrid) -> Result<()> {
        if self.default_exposure.len() != self.num_events * self.num_pieces || grid.len() != self.num_pieces {
            return Err(Error::shape("default exposure does not match events × pieces"));
        }
        let key = |e: &SparseEntry| (e.event, e.piece, e.task);
        for list in [&self.event_entries, &self.censor_overrides] {
            if list.windows(2).any(|w| key(&w[0]) >= key(&w[1])) {
                return Err(Error::shape("sparse entries must be strictly sorted by (event, piece, task)"));
            }
            for e in list.iter() {
                if e.event as usize >= self.num_events || e.task as usize >= self.num_tasks || e.piece as usize >= self.num_pieces {
                    return Err(Error::shape("sparse entry index out of range"));
                }
                let width = grid.end(e.piece as usize) - grid.start(e.piece as usize);
                if !(0.0..=width).contains(&e.time) {
                    return Err(Error::shape("sparse entry time exceeds piece width"));
                }
            }
        }
        let mut seen = BTreeMap::new();
        for e in &self.event_entries {
            if seen.insert((e.event, e.task), ()).is_some() {
                return Err(Error::shape("more than one event entry for an (event, task) pair"));
            }
        }
        Ok(())
    }
}

/// Labelling rules shared by pretraining and adaptation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelPolicy {
    /// A code whose first occurrence censors every task.
    pub death_code: Option<CodeId>,
}

impl LabelPolicy {
    /// The censoring time of a record: its last event, or death if earlier.
    pub fn censor_time(&self, timeline: &EventTimeline) -> f64 {
        let end = timeline.end_time();
        match self.death_code {
            Some(code) => timeline.events.iter().find(|e| e.code == code).map_or(end, |e| e.time.min(end)),
            None => end,
        }
    }
}

/// Labels every event of `timeline` as a prediction point.
pub fn build_labels(timeline: &EventTimeline, tasks: &TaskSet, grid: &PieceGrid, policy: &LabelPolicy) -> SurvivalBatch {
    build_labels_for_positions(timeline, 0..timeline.events.len(), tasks, grid, policy)
}

/// Labels the events at `positions` (increasing). For prediction event `j`
/// and task `k`, the event time is the delay until the next occurrence of
/// `k`'s code strictly after `j`'s timestamp, and the censoring time is the
/// delay until the record's censor time.
pub fn build_labels_for_positions(
    timeline: &EventTimeline,
    positions: core::ops::Range<usize>,
    tasks: &TaskSet,
    grid: &PieceGrid,
    policy: &LabelPolicy,
) -> SurvivalBatch {
    let num_tasks = tasks.len();
    let num_pieces = grid.len();
    let task_of: BTreeMap<CodeId, u32> = tasks.tasks.iter().enumerate().map(|(k, &c)| (c, k as u32)).collect();
    let censor = policy.censor_time(timeline);
    let events = &timeline.events;

    // next_time[k]: earliest occurrence of task k strictly after the current
    // prediction time, maintained while sweeping backwards.
    let mut next_time = vec![f64::INFINITY; num_tasks];
    let mut cursor = events.len();
    let num_events = positions.len();
    let base = positions.start;
    let mut batch = SurvivalBatch {
        num_events,
        num_tasks,
        num_pieces,
        default_exposure: vec![0.0; num_events * num_pieces],
        ..Default::default()
    };
    let mut per_event: Vec<(Vec<SparseEntry>, Vec<SparseEntry>)> = Vec::with_capacity(num_events);

    for j in positions.rev() {
        let t = events[j].time;
        while cursor > 0 && events[cursor - 1].time > t {
            cursor -= 1;
            if let Some(&k) = task_of.get(&events[cursor].code) {
                next_time[k as usize] = events[cursor].time;
            }
        }
        let row = j - base;
        let horizon = censor - t;
        let mut entries = Vec::new();
        let mut overrides = Vec::new();
        if horizon <= 0.0 {
            if horizon < 0.0 {
                batch.skipped += 1;
            }
            per_event.push((entries, overrides));
            continue;
        }
        for p in 0..num_pieces {
            batch.default_exposure[row * num_pieces + p] = grid.exposure(p, horizon);
        }
        for (k, &next) in next_time.iter().enumerate() {
            let delay = next - t;
            if delay > horizon {
                continue;
            }
            let piece = grid.piece_of(delay);
            entries.push(SparseEntry { event: row as u32, task: k as u32, piece: piece as u32, time: delay - grid.start(piece) });
            for later in piece + 1..num_pieces {
                if batch.default_exposure[row * num_pieces + later] > 0.0 {
                    overrides.push(SparseEntry { event: row as u32, task: k as u32, piece: later as u32, time: 0.0 });
                }
            }
        }
        per_event.push((entries, overrides));
    }

    per_event.reverse();
    let key = |e: &SparseEntry| (e.event, e.piece, e.task);
    for (mut entries, mut overrides) in per_event {
        entries.sort_by_key(key);
        overrides.sort_by_key(key);
        batch.event_entries.extend(entries);
        batch.censor_overrides.extend(overrides);
    }
    batch
}
