use alloc::vec::Vec;

use super::labels::TaskSample;
use crate::encoder::{self, embed, EncoderConfig, EncoderParams, Embedded, Mode, TokenMap};
use crate::error::Result;
use crate::exec::Executor;
use crate::head::{PieceGrid, PiecewiseHazard, SparseEntry, SurvivalBatch, TaskHead};
use crate::objectives::{NextCodeModel, TteModel, TteParams};
use crate::timeline::EventTimeline;

/// The pretrained encoder with its tokenization.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub config: EncoderConfig,
    pub tokens: TokenMap,
    pub encoder: EncoderParams,
}

impl Backbone {
    pub fn from_tte(model: &TteModel) -> Self {
        Backbone { config: model.config.clone(), tokens: model.tokens.clone(), encoder: model.params.encoder.clone() }
    }

    pub fn from_next_code(model: &NextCodeModel) -> Self {
        Backbone { config: model.config.clone(), tokens: model.tokens.clone(), encoder: model.params.encoder.clone() }
    }

    /// Encoder input for `sample`: the record up to and including the last
    /// event at or before the prediction time.
    pub fn input(&self, timelines: &[EventTimeline], sample: &TaskSample) -> Embedded {
        let tl = &timelines[sample.patient];
        let prefix = EventTimeline {
            patient_id: tl.patient_id,
            birth_time: tl.birth_time,
            events: tl.events[..=sample.prediction_index].to_vec(),
        };
        embed(&self.config, &self.tokens, &prefix)
    }
}

/// Representation at the prediction point of every sample, `n × inner_dim`.
pub fn representations<E: Executor>(
    backbone: &Backbone,
    encoder: &EncoderParams,
    timelines: &[EventTimeline],
    samples: &[TaskSample],
    exec: &E,
) -> Result<Vec<f64>> {
    let rows = exec.map(samples.len(), |i| {
        let input = backbone.input(timelines, &samples[i]);
        let cache = encoder::forward(&backbone.config, encoder, &input, Mode::Eval)?;
        Ok(cache.row(input.len() - 1).to_vec())
    });
    let mut out = Vec::with_capacity(samples.len() * backbone.config.inner_dim);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// Single-task labels with one row per sample. Exposure runs to the event
/// or censoring time, so no overrides are needed.
pub fn task_batch(samples: &[TaskSample], grid: &PieceGrid) -> SurvivalBatch {
    let p_n = grid.len();
    let mut batch = SurvivalBatch::empty(1, p_n);
    batch.num_events = samples.len();
    batch.default_exposure = Vec::with_capacity(samples.len() * p_n);
    for (i, s) in samples.iter().enumerate() {
        for p in 0..p_n {
            batch.default_exposure.push(grid.exposure(p, s.time));
        }
        if s.event {
            let piece = grid.piece_of(s.time);
            batch.event_entries.push(SparseEntry { event: i as u32, task: 0, piece: piece as u32, time: s.time - grid.start(piece) });
        }
    }
    batch
}

/// A model for one target task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskModel {
    pub backbone: Backbone,
    /// Head with a single task.
    pub head: TaskHead,
    pub grid: PieceGrid,
}

impl TaskModel {
    pub fn params(&self) -> TteParams {
        TteParams { encoder: self.backbone.encoder.clone(), head: self.head.clone() }
    }

    pub fn with_params(&self, params: TteParams) -> Self {
        TaskModel { backbone: Backbone { encoder: params.encoder, ..self.backbone.clone() }, head: params.head, grid: self.grid.clone() }
    }

    /// Predicted hazards from each sample's prediction time.
    pub fn predict<E: Executor>(&self, timelines: &[EventTimeline], samples: &[TaskSample], exec: &E) -> Result<Vec<PiecewiseHazard>> {
        let repr = representations(&self.backbone, &self.backbone.encoder, timelines, samples, exec)?;
        let states = self.head.states(&repr);
        Ok((0..samples.len()).map(|i| PiecewiseHazard::from_head(&self.head, &self.grid, &states, i, 0)).collect())
    }
}
