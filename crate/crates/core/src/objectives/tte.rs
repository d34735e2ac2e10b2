use alloc::vec;
use alloc::vec::Vec;

use super::optim::Parameters;
use super::train::{train, Contribution, Objective, Resume, TrainConfig, TrainOutcome};
use crate::encoder::{self, embed, EncoderConfig, EncoderParams, Embedded, Mode, TokenMap};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::head::{build_labels_for_positions, fit_pieces, fused_nll, LabelPolicy, PieceGrid, SurvivalBatch, TaskHead};
use crate::ontology::TaskSet;
use crate::rng::{self, DetRng};
use crate::timeline::EventTimeline;

/// How the summed likelihood is scaled before optimization. Stored with
/// checkpoints.
pub const LOSS_NORMALIZATION: &str = "per_prediction_event";

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub num_pieces: usize,
    pub survival_dim: usize,
    /// Tasks evaluated together in the streaming likelihood.
    pub task_block: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { num_pieces: 8, survival_dim: 32, task_block: crate::head::DEFAULT_TASK_BLOCK }
    }
}

/// Encoder plus survival head.
#[derive(Debug, Clone, PartialEq)]
pub struct TteParams {
    pub encoder: EncoderParams,
    pub head: TaskHead,
}

impl Parameters for TteParams {
    fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut t = self.encoder.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

/// A pretrained time-to-event model.
#[derive(Debug, Clone, PartialEq)]
pub struct TteModel {
    pub config: EncoderConfig,
    pub tokens: TokenMap,
    pub grid: PieceGrid,
    pub tasks: TaskSet,
    pub params: TteParams,
}

/// Encodes `input` and returns the summed likelihood of `labels`, whose
/// event `i` is predicted from encoder row `rows[i]`. With `need_grad`,
/// gradients of the summed loss are attached.
pub fn survival_contribution(
    config: &EncoderConfig,
    params: &TteParams,
    input: &Embedded,
    rows: &[usize],
    labels: &SurvivalBatch,
    mode: Mode<'_>,
    need_grad: bool,
    block: usize,
) -> Result<Contribution<TteParams>> {
    if rows.len() != labels.num_events {
        return Err(Error::shape("one encoder row per labelled event"));
    }
    if input.is_empty() || rows.is_empty() {
        return Ok(Contribution { loss: 0.0, count: 0.0, grads: need_grad.then(|| params.zeros_like()) });
    }
    let cache = encoder::forward(config, &params.encoder, input, mode)?;
    let d = config.inner_dim;
    let mut repr = Vec::with_capacity(rows.len() * d);
    for &r in rows {
        repr.extend_from_slice(cache.row(r));
    }
    let states = params.head.states(&repr);
    let out = fused_nll(&states, &params.head, labels, block)?;
    if let Some(o) = out.overflow {
        return Err(Error::NonFinite(alloc::format!(
            "hazard overflow at event {} task {} piece {} (log hazard {})",
            o.event, o.task, o.piece, o.log_hazard
        )));
    }
    let grads = if need_grad {
        let mut g = params.zeros_like();
        let d_repr = params.head.states_backward(&repr, &out.grad_states, &mut g.head);
        crate::linalg::axpy(1.0, &out.grad_embeddings, &mut g.head.task_embeddings);
        crate::linalg::axpy(1.0, &out.grad_bias, &mut g.head.task_bias);
        let mut d_output = vec![0.0; cache.len() * d];
        for (i, &r) in rows.iter().enumerate() {
            crate::linalg::axpy(1.0, &d_repr[i * d..(i + 1) * d], &mut d_output[r * d..(r + 1) * d]);
        }
        encoder::backward(config, &params.encoder, &cache, &d_output, &mut g.encoder);
        Some(g)
    } else {
        None
    };
    Ok(Contribution { loss: out.loss, count: rows.len() as f64, grads })
}

struct PretrainObjective<'a> {
    config: &'a EncoderConfig,
    tokens: &'a TokenMap,
    tasks: &'a TaskSet,
    grid: &'a PieceGrid,
    policy: &'a LabelPolicy,
    block: usize,
    train: &'a [EventTimeline],
    validation: &'a [EventTimeline],
}

impl PretrainObjective<'_> {
    fn example(&self, params: &TteParams, timeline: &EventTimeline, mode: Mode<'_>, need_grad: bool) -> Result<Contribution<TteParams>> {
        let input = embed(self.config, self.tokens, timeline);
        let positions = input.truncated..timeline.events.len();
        let labels = build_labels_for_positions(timeline, positions, self.tasks, self.grid, self.policy);
        let rows: Vec<usize> = (0..input.len()).collect();
        survival_contribution(self.config, params, &input, &rows, &labels, mode, need_grad, self.block)
    }
}

impl Objective<TteParams> for PretrainObjective<'_> {
    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn validation_len(&self) -> usize {
        self.validation.len()
    }

    fn train_example(&self, params: &TteParams, index: usize, rng: &mut DetRng) -> Result<Contribution<TteParams>> {
        self.example(params, &self.train[index], Mode::Train(rng), true)
    }

    fn validation_example(&self, params: &TteParams, index: usize) -> Result<Contribution<TteParams>> {
        self.example(params, &self.validation[index], Mode::Eval, false)
    }
}

/// Patients used to fit the piece grid and the initial task rates.
const CALIBRATION_PATIENTS: usize = 512;

/// Piece boundaries at quantiles of observed event delays, and per-task
/// event rates (events per day at risk), from up to 512 training patients.
pub fn calibrate_head(
    train: &[EventTimeline],
    tasks: &TaskSet,
    num_pieces: usize,
    policy: &LabelPolicy,
) -> Result<(PieceGrid, Vec<f64>)> {
    let single = PieceGrid::single();
    let mut delays = Vec::new();
    let mut events = vec![0.0; tasks.len()];
    let mut exposure = vec![0.0; tasks.len()];
    for tl in train.iter().take(CALIBRATION_PATIENTS) {
        let batch = build_labels_for_positions(tl, 0..tl.events.len(), tasks, &single, policy);
        let total: f64 = batch.default_exposure.iter().sum();
        exposure.iter_mut().for_each(|e| *e += total);
        for e in &batch.event_entries {
            let k = e.task as usize;
            events[k] += 1.0;
            exposure[k] -= batch.default_exposure[e.event as usize] - e.time;
            delays.push(e.time);
        }
    }
    let grid = fit_pieces(&delays, num_pieces)?;
    let rates = events.iter().zip(&exposure).map(|(&d, &u)| if u > 0.0 { (d / u).max(1e-9) } else { 1e-9 }).collect();
    Ok((grid, rates))
}

/// Fresh parameters: encoder from stream 1 of `seed`, head from stream 2.
pub fn init_tte_params(config: &EncoderConfig, head: &HeadConfig, num_tasks: usize, rates: Option<&[f64]>, seed: u64) -> TteParams {
    TteParams {
        encoder: EncoderParams::init(config, &mut rng::substream(seed, 1)),
        head: TaskHead::init(config.inner_dim, head.num_pieces, head.survival_dim, num_tasks, rates, &mut rng::substream(seed, 2)),
    }
}

/// End-to-end pretraining on the time-to-event likelihood of `tasks`, with
/// every event of every training patient as a prediction point.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_tte<E: Executor>(
    train_set: &[EventTimeline],
    validation: &[EventTimeline],
    tasks: &TaskSet,
    config: &EncoderConfig,
    head: &HeadConfig,
    train_config: &TrainConfig,
    policy: &LabelPolicy,
    exec: &E,
) -> Result<(TteModel, TrainOutcome<TteParams>)> {
    config.validate()?;
    if tasks.is_empty() || head.num_pieces == 0 || head.survival_dim == 0 {
        return Err(Error::invalid("need at least one task, piece and survival dimension"));
    }
    let tokens = TokenMap::from_frequencies(train_set, config.vocab_size);
    let (grid, rates) = calibrate_head(train_set, tasks, head.num_pieces, policy)?;
    let init = init_tte_params(config, head, tasks.len(), Some(&rates), train_config.seed);
    let objective = PretrainObjective {
        config,
        tokens: &tokens,
        tasks,
        grid: &grid,
        policy,
        block: head.task_block,
        train: train_set,
        validation,
    };
    let outcome = train(&objective, init, train_config, exec, None)?;
    let model = TteModel { config: config.clone(), tokens, grid, tasks: tasks.clone(), params: outcome.best.clone() };
    Ok((model, outcome))
}

/// Continues a run saved from [`pretrain_tte`]. `model` supplies the token
/// map, grid and tasks; `resume` the parameters and optimizer state.
#[allow(clippy::too_many_arguments)]
pub fn resume_tte<E: Executor>(
    train_set: &[EventTimeline],
    validation: &[EventTimeline],
    model: &TteModel,
    task_block: usize,
    train_config: &TrainConfig,
    policy: &LabelPolicy,
    resume: Resume<TteParams>,
    exec: &E,
) -> Result<(TteModel, TrainOutcome<TteParams>)> {
    let objective = PretrainObjective {
        config: &model.config,
        tokens: &model.tokens,
        tasks: &model.tasks,
        grid: &model.grid,
        policy,
        block: task_block,
        train: train_set,
        validation,
    };
    let init = resume.last.clone();
    let outcome = train(&objective, init, train_config, exec, Some(resume))?;
    let out = TteModel { params: outcome.best.clone(), ..model.clone() };
    Ok((out, outcome))
}

/// Mean likelihood per prediction event of `model` on `timelines`.
pub fn tte_loss<E: Executor>(model: &TteModel, timelines: &[EventTimeline], policy: &LabelPolicy, exec: &E) -> Result<f64> {
    let objective = PretrainObjective {
        config: &model.config,
        tokens: &model.tokens,
        tasks: &model.tasks,
        grid: &model.grid,
        policy,
        block: crate::head::DEFAULT_TASK_BLOCK,
        train: &[],
        validation: timelines,
    };
    super::train::validation_loss(&objective, &model.params, exec)
}
