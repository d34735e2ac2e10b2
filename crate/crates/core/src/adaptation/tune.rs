use alloc::vec::Vec;

use super::labels::TaskSample;
use super::model::{task_batch, Backbone, TaskModel};
use crate::encoder::{EncoderConfig, Embedded, Mode, TokenMap};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::head::{fit_pieces, PieceGrid, SurvivalBatch, DEFAULT_TASK_BLOCK};
use crate::objectives::{
    init_tte_params, survival_contribution, train, validation_loss, Contribution, HeadConfig, Objective, TrainConfig,
    TrainOutcome, TteParams,
};
use crate::rng::DetRng;
use crate::timeline::EventTimeline;

struct TaskObjective<'a> {
    config: &'a EncoderConfig,
    train: Vec<(Embedded, SurvivalBatch)>,
    validation: Vec<(Embedded, SurvivalBatch)>,
}

fn prepare(backbone: &Backbone, grid: &PieceGrid, timelines: &[EventTimeline], samples: &[TaskSample]) -> Vec<(Embedded, SurvivalBatch)> {
    samples.iter().map(|s| (backbone.input(timelines, s), task_batch(core::slice::from_ref(s), grid))).collect()
}

fn example(config: &EncoderConfig, params: &TteParams, item: &(Embedded, SurvivalBatch), mode: Mode<'_>, need_grad: bool) -> Result<Contribution<TteParams>> {
    let (input, batch) = item;
    survival_contribution(config, params, input, &[input.len() - 1], batch, mode, need_grad, DEFAULT_TASK_BLOCK)
}

impl Objective<TteParams> for TaskObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn validation_len(&self) -> usize {
        self.validation.len()
    }

    fn train_example(&self, params: &TteParams, index: usize, rng: &mut DetRng) -> Result<Contribution<TteParams>> {
        example(self.config, params, &self.train[index], Mode::Train(rng), true)
    }

    fn validation_example(&self, params: &TteParams, index: usize) -> Result<Contribution<TteParams>> {
        example(self.config, params, &self.validation[index], Mode::Eval, false)
    }
}

fn fit_task<E: Executor>(
    start: &TaskModel,
    timelines: &[EventTimeline],
    train_samples: &[TaskSample],
    validation: &[TaskSample],
    train_config: &TrainConfig,
    exec: &E,
) -> Result<(TaskModel, TrainOutcome<TteParams>)> {
    let objective = TaskObjective {
        config: &start.backbone.config,
        train: prepare(&start.backbone, &start.grid, timelines, train_samples),
        validation: prepare(&start.backbone, &start.grid, timelines, validation),
    };
    let outcome = train(&objective, start.params(), train_config, exec, None)?;
    Ok((start.with_params(outcome.best.clone()), outcome))
}

/// Updates every parameter on the task likelihood, starting from a probe.
/// The starting point is scored on validation first, so the result is
/// never worse there than the probe.
pub fn finetune<E: Executor>(
    probe: &TaskModel,
    timelines: &[EventTimeline],
    train_samples: &[TaskSample],
    validation: &[TaskSample],
    train_config: &TrainConfig,
    exec: &E,
) -> Result<(TaskModel, TrainOutcome<TteParams>)> {
    let config = TrainConfig { validate_initial: true, ..train_config.clone() };
    fit_task(probe, timelines, train_samples, validation, &config, exec)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScratchConfig {
    pub head: HeadConfig,
}

/// The same architecture trained on the task alone from random weights.
pub fn train_scratch<E: Executor>(
    config: &EncoderConfig,
    scratch: &ScratchConfig,
    timelines: &[EventTimeline],
    train_samples: &[TaskSample],
    validation: &[TaskSample],
    train_config: &TrainConfig,
    exec: &E,
) -> Result<(TaskModel, TrainOutcome<TteParams>)> {
    config.validate()?;
    let times: Vec<f64> = train_samples.iter().filter(|s| s.event).map(|s| s.time).collect();
    if times.is_empty() {
        return Err(Error::Undefined("task training labels contain no events"));
    }
    let grid = fit_pieces(&times, scratch.head.num_pieces).or_else(|_| fit_pieces(&times, 1))?;
    let exposure: f64 = train_samples.iter().map(|s| s.time).sum();
    let rate = times.len() as f64 / exposure.max(1e-12);
    let head = HeadConfig { num_pieces: grid.len(), ..scratch.head.clone() };
    let patients: Vec<EventTimeline> = train_samples.iter().map(|s| timelines[s.patient].clone()).collect();
    let tokens = TokenMap::from_frequencies(&patients, config.vocab_size);
    let params = init_tte_params(config, &head, 1, Some(&[rate]), train_config.seed);
    let start = TaskModel {
        backbone: Backbone { config: config.clone(), tokens, encoder: params.encoder },
        head: params.head,
        grid,
    };
    fit_task(&start, timelines, train_samples, validation, train_config, exec)
}

/// Mean task likelihood per sample.
pub fn task_loss<E: Executor>(model: &TaskModel, timelines: &[EventTimeline], samples: &[TaskSample], exec: &E) -> Result<f64> {
    let objective = TaskObjective {
        config: &model.backbone.config,
        train: Vec::new(),
        validation: prepare(&model.backbone, &model.grid, timelines, samples),
    };
    validation_loss(&objective, &model.params(), exec)
}
