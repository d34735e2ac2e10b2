use alloc::vec::Vec;

use super::optim::{Adam, AdamConfig, Parameters, Schedule};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::{self, DetRng};

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DROPOUT_STREAM: u64 = 0x4452_4f50;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: u64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Patients per optimizer step.
    pub batch_size: usize,
    /// Global gradient-norm clip; `0` disables clipping.
    pub grad_clip: f64,
    /// Learning rate at the last step as a fraction of the peak.
    pub final_lr_fraction: f64,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Stop this call after this many epochs; the schedule still spans
    /// `max_epochs`, so a later resume continues the same run.
    pub epochs_this_call: Option<usize>,
    /// Score the initial parameters first, so the result is never worse on
    /// validation than the starting point.
    pub validate_initial: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            warmup_steps: 50,
            max_epochs: 10,
            patience: 2,
            batch_size: 8,
            grad_clip: 1.0,
            final_lr_fraction: 0.0,
            adam: AdamConfig::default(),
            seed: 0,
            epochs_this_call: None,
            validate_initial: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) || self.grad_clip < 0.0 {
            return Err(Error::invalid("final_lr_fraction must lie in [0, 1] and grad_clip must be non-negative"));
        }
        Ok(())
    }
}

/// Loss summed over one patient's prediction points, the number of points,
/// and (for training) the gradient of the summed loss.
#[derive(Debug, Clone)]
pub struct Contribution<P> {
    pub loss: f64,
    pub count: f64,
    pub grads: Option<P>,
}

/// A per-patient training objective. Losses are normalized by the total
/// count of prediction points in a batch.
pub trait Objective<P>: Sync {
    fn train_len(&self) -> usize;
    fn validation_len(&self) -> usize;
    fn train_example(&self, params: &P, index: usize, rng: &mut DetRng) -> Result<Contribution<P>>;
    fn validation_example(&self, params: &P, index: usize) -> Result<Contribution<P>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub improved: bool,
}

/// Everything besides the parameters needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub step: u64,
    /// Next epoch to run.
    pub epoch: usize,
    pub best_validation_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_since_best: usize,
    pub adam: Adam,
}

#[derive(Debug, Clone)]
pub struct Resume<P> {
    pub last: P,
    pub best: P,
    pub state: TrainState,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: P,
    pub last: P,
    pub state: TrainState,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Mean loss per prediction point over the validation patients.
pub fn validation_loss<P: Send + Sync, O: Objective<P>, E: Executor>(objective: &O, params: &P, exec: &E) -> Result<f64> {
    let parts = exec.map(objective.validation_len(), |i| objective.validation_example(params, i));
    let (mut loss, mut count) = (0.0, 0.0);
    for c in parts {
        let c = c?;
        loss += c.loss;
        count += c.count;
    }
    Ok(if count > 0.0 { loss / count } else { 0.0 })
}

/// Minibatch Adam with warmup, linear decay and early stopping on the
/// validation loss. Each epoch visits every training patient once in a
/// seeded order. Per-patient work goes through `exec` and is reduced in
/// patient order.
pub fn train<P, O, E>(objective: &O, init: P, config: &TrainConfig, exec: &E, resume: Option<Resume<P>>) -> Result<TrainOutcome<P>>
where
    P: Parameters,
    O: Objective<P>,
    E: Executor,
{
    config.validate()?;
    let n = objective.train_len();
    if n == 0 || objective.validation_len() == 0 {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let steps_per_epoch = n.div_ceil(config.batch_size) as u64;
    let schedule = Schedule {
        peak: config.learning_rate,
        warmup: config.warmup_steps,
        total: steps_per_epoch * config.max_epochs as u64,
        floor: config.final_lr_fraction,
    };
    let (mut params, mut best, mut state) = match resume {
        Some(r) => (r.last, r.best, r.state),
        None => {
            let adam = Adam::new(config.adam.clone(), &init);
            let initial = if config.validate_initial { validation_loss(objective, &init, exec)? } else { f64::INFINITY };
            let state = TrainState {
                step: 0,
                epoch: 0,
                best_validation_loss: if initial.is_nan() { f64::INFINITY } else { initial },
                best_epoch: None,
                epochs_since_best: 0,
                adam,
            };
            (init.clone(), init, state)
        }
    };
    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let limit = config.epochs_this_call.map_or(config.max_epochs, |e| (state.epoch + e).min(config.max_epochs));

    while state.epoch < limit {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut rng::substream(config.seed ^ SHUFFLE_STREAM, epoch as u64), &mut order);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            let step = state.step;
            let parts = exec.map(batch.len(), |i| {
                let mut r = rng::substream(rng::splitmix64(config.seed ^ DROPOUT_STREAM ^ step), batch[i] as u64);
                objective.train_example(&params, batch[i], &mut r)
            });
            let mut grads = params.zeros_like();
            let (mut loss, mut count) = (0.0, 0.0);
            for c in parts {
                let c = c?;
                loss += c.loss;
                count += c.count;
                if let Some(g) = c.grads {
                    grads.add_assign(&g);
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            let lr = schedule.rate(step);
            let mut grad_norm = 0.0;
            if count > 0.0 {
                grads.scale(1.0 / count);
                grad_norm = grads.norm();
                if !grad_norm.is_finite() {
                    return Err(Error::Diverged { epoch, loss: grad_norm });
                }
                if config.grad_clip > 0.0 && grad_norm > config.grad_clip {
                    grads.scale(config.grad_clip / grad_norm);
                }
                state.adam.update(&mut params, &grads, lr);
            }
            steps.push(StepRecord { step, epoch, loss: if count > 0.0 { loss / count } else { 0.0 }, learning_rate: lr, grad_norm });
            epoch_loss += loss;
            epoch_count += count;
            state.step += 1;
        }
        let val = validation_loss(objective, &params, exec)?;
        if !val.is_finite() {
            return Err(Error::Diverged { epoch, loss: val });
        }
        let improved = val < state.best_validation_loss;
        if improved {
            state.best_validation_loss = val;
            state.best_epoch = Some(epoch);
            state.epochs_since_best = 0;
            best = params.clone();
        } else {
            state.epochs_since_best += 1;
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: if epoch_count > 0.0 { epoch_loss / epoch_count } else { 0.0 },
            validation_loss: val,
            improved,
        });
        state.epoch += 1;
        if state.epochs_since_best >= config.patience.max(1) {
            stopped_early = state.epoch < config.max_epochs;
            break;
        }
    }
    Ok(TrainOutcome { best, last: params, state, steps, epochs, stopped_early })
}
