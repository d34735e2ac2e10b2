use alloc::vec;
use alloc::vec::Vec;

use super::labels::TaskSample;
use super::model::{representations, task_batch, Backbone, TaskModel};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::head::{fit_pieces, DenseLabels, PieceGrid, SurvivalBatch, TaskHead};
use crate::linalg::{dot, solve_spd};
use crate::objectives::{NextCodeModel, TteModel};
use crate::timeline::EventTimeline;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Pieces for backbones without a survival head (next-code models).
    pub num_pieces: usize,
    /// L2 penalty on the task vector (not on its bias).
    pub l2: f64,
    pub max_iterations: usize,
    /// Stop when the Newton decrement falls below this.
    pub tolerance: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { num_pieces: 8, l2: 0.1, max_iterations: 100, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub beta: Vec<f64>,
    pub bias: f64,
    /// Penalized likelihood at the solution.
    pub loss: f64,
    pub iterations: usize,
}

/// The likelihood on fixed states, as a function of `(β, bias)`.
struct Problem<'a> {
    states: &'a [f64],
    width: usize,
    labels: DenseLabels,
    l2: f64,
}

impl Problem<'_> {
    fn loss(&self, beta: &[f64], bias: f64) -> f64 {
        let p_n = self.labels.num_pieces;
        let mut total = 0.5 * self.l2 * dot(beta, beta);
        for i in 0..self.labels.num_events {
            for p in 0..p_n {
                let c = self.labels.index(i, 0, p);
                let x = &self.states[(i * p_n + p) * self.width..(i * p_n + p + 1) * self.width];
                let z = dot(x, beta) + bias;
                total += libm::exp(z) * self.labels.exposure[c] - self.labels.indicator[c] * z;
            }
        }
        total
    }

    /// Gradient and Hessian over `(β, bias)`, bias last.
    fn derivatives(&self, beta: &[f64], bias: f64) -> (Vec<f64>, Vec<f64>) {
        let b = self.width;
        let m = b + 1;
        let p_n = self.labels.num_pieces;
        let mut g = vec![0.0; m];
        let mut h = vec![0.0; m * m];
        for i in 0..self.labels.num_events {
            for p in 0..p_n {
                let c = self.labels.index(i, 0, p);
                let u = self.labels.exposure[c];
                let delta = self.labels.indicator[c];
                if u == 0.0 && delta == 0.0 {
                    continue;
                }
                let x = &self.states[(i * p_n + p) * b..(i * p_n + p + 1) * b];
                let lu = libm::exp(dot(x, beta) + bias) * u;
                let r = lu - delta;
                for a in 0..b {
                    g[a] += r * x[a];
                    for e in 0..=a {
                        h[a * m + e] += lu * x[a] * x[e];
                    }
                    h[b * m + a] += lu * x[a];
                }
                g[b] += r;
                h[b * m + b] += lu;
            }
        }
        for a in 0..b {
            g[a] += self.l2 * beta[a];
            h[a * m + a] += self.l2;
        }
        for a in 0..m {
            for e in a + 1..m {
                h[a * m + e] = h[e * m + a];
            }
        }
        (g, h)
    }
}

/// Minimizes the single-task likelihood over a task vector and bias with
/// damped Newton steps, keeping `states` (`n × pieces · width`) fixed.
pub fn fit_probe(states: &[f64], width: usize, batch: &SurvivalBatch, config: &ProbeConfig) -> Result<ProbeFit> {
    if batch.num_tasks != 1 || states.len() != batch.num_events * batch.num_pieces * width {
        return Err(Error::shape("probe expects one task and matching states"));
    }
    let labels = DenseLabels::from_batch(batch);
    let events: f64 = labels.indicator.iter().sum();
    let exposure: f64 = labels.exposure.iter().sum();
    if events == 0.0 || exposure <= 0.0 {
        return Err(Error::Undefined("probe training labels contain no events"));
    }
    let problem = Problem { states, width, labels, l2: config.l2 };
    let mut beta = vec![0.0; width];
    let mut bias = libm::log(events / exposure);
    let mut loss = problem.loss(&beta, bias);
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let (g, mut h) = problem.derivatives(&beta, bias);
        let mut step = g.clone();
        let mut jitter = 1e-12;
        let mut copy = h.clone();
        while !solve_spd(&mut copy, &mut step, width + 1) {
            jitter *= 10.0;
            if jitter > 1e6 {
                return Err(Error::NonFinite("probe Hessian".into()));
            }
            for a in 0..=width {
                h[a * (width + 1) + a] += jitter;
            }
            copy = h.clone();
            step = g.clone();
        }
        let decrement = dot(&g, &step);
        if !decrement.is_finite() {
            return Err(Error::NonFinite("probe Newton step".into()));
        }
        if decrement < config.tolerance {
            break;
        }
        let mut t = 1.0;
        loop {
            let nb: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let nc = bias - t * step[width];
            let nl = problem.loss(&nb, nc);
            if nl <= loss - 1e-4 * t * decrement || t < 1e-10 {
                beta = nb;
                bias = nc;
                loss = nl;
                break;
            }
            t *= 0.5;
        }
    }
    Ok(ProbeFit { beta, bias, loss, iterations })
}

/// A pretrained model to adapt.
#[derive(Debug, Clone, Copy)]
pub enum Pretrained<'a> {
    Tte(&'a TteModel),
    NextCode(&'a NextCodeModel),
}

impl Pretrained<'_> {
    pub fn backbone(&self) -> Backbone {
        match self {
            Pretrained::Tte(m) => Backbone::from_tte(m),
            Pretrained::NextCode(m) => Backbone::from_next_code(m),
        }
    }
}

/// A head whose state for piece `p` is `[R, e_p]`: the representation
/// itself plus a one-hot piece indicator, giving a proportional-hazards
/// probe with per-piece baselines on a backbone without a survival head.
fn passthrough_head(inner_dim: usize, num_pieces: usize) -> TaskHead {
    let b = inner_dim + num_pieces;
    let mut head = TaskHead::zeros(inner_dim, num_pieces, b, 1);
    let w = num_pieces * b;
    for p in 0..num_pieces {
        for d in 0..inner_dim {
            head.projection[d * w + p * b + d] = 1.0;
        }
        head.projection_bias[p * b + inner_dim + p] = 1.0;
    }
    head
}

/// Starting head (task vector still zero) and grid for probing
/// `pretrained` on `samples`.
fn probe_start(pretrained: Pretrained<'_>, samples: &[TaskSample], config: &ProbeConfig) -> Result<(TaskHead, PieceGrid)> {
    Ok(match pretrained {
        Pretrained::Tte(m) => {
            let mut head = TaskHead::zeros(m.params.head.inner_dim, m.params.head.num_pieces, m.params.head.survival_dim, 1);
            head.projection = m.params.head.projection.clone();
            head.projection_bias = m.params.head.projection_bias.clone();
            (head, m.grid.clone())
        }
        Pretrained::NextCode(m) => {
            let times: Vec<f64> = samples.iter().filter(|s| s.event).map(|s| s.time).collect();
            let grid = fit_pieces(&times, config.num_pieces).or_else(|_| fit_pieces(&times, 1))?;
            (passthrough_head(m.config.inner_dim, grid.len()), grid)
        }
    })
}

fn states_and_batch<E: Executor>(
    backbone: &Backbone,
    head: &TaskHead,
    grid: &PieceGrid,
    timelines: &[EventTimeline],
    samples: &[TaskSample],
    exec: &E,
) -> Result<(Vec<f64>, SurvivalBatch)> {
    let repr = representations(backbone, &backbone.encoder, timelines, samples, exec)?;
    Ok((head.states(&repr), task_batch(samples, grid)))
}

/// Fits a new task vector (and bias) on frozen representations. Only the
/// returned head's task embedding and bias differ from the pretrained
/// model; for a next-code backbone the projection is a fixed pass-through
/// and the grid is fitted on the training event times.
pub fn linear_probe<E: Executor>(
    pretrained: Pretrained<'_>,
    timelines: &[EventTimeline],
    samples: &[TaskSample],
    config: &ProbeConfig,
    exec: &E,
) -> Result<(TaskModel, ProbeFit)> {
    let backbone = pretrained.backbone();
    let (mut head, grid) = probe_start(pretrained, samples, config)?;
    let (states, batch) = states_and_batch(&backbone, &head, &grid, timelines, samples, exec)?;
    let fit = fit_probe(&states, head.survival_dim, &batch, config)?;
    head.task_embeddings = fit.beta.clone();
    head.task_bias = vec![fit.bias];
    Ok((TaskModel { backbone, head, grid }, fit))
}

/// Unpenalized likelihood of `(β, bias)` on fixed states.
pub fn probe_loss(states: &[f64], width: usize, batch: &SurvivalBatch, beta: &[f64], bias: f64) -> f64 {
    Problem { states, width, labels: DenseLabels::from_batch(batch), l2: 0.0 }.loss(beta, bias)
}

/// [`linear_probe`] for each penalty in `l2_grid`, keeping the one with the
/// lowest likelihood on `validation` (the larger penalty on ties).
/// Returns the chosen penalty with the model.
pub fn linear_probe_selected<E: Executor>(
    pretrained: Pretrained<'_>,
    timelines: &[EventTimeline],
    train: &[TaskSample],
    validation: &[TaskSample],
    config: &ProbeConfig,
    l2_grid: &[f64],
    exec: &E,
) -> Result<(TaskModel, ProbeFit, f64)> {
    if l2_grid.is_empty() || l2_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::invalid("l2 grid must be non-empty with finite, non-negative values"));
    }
    let backbone = pretrained.backbone();
    let (mut head, grid) = probe_start(pretrained, train, config)?;
    let (states, batch) = states_and_batch(&backbone, &head, &grid, timelines, train, exec)?;
    let (val_states, val_batch) = states_and_batch(&backbone, &head, &grid, timelines, validation, exec)?;
    let mut best: Option<(f64, f64, ProbeFit)> = None;
    for &l2 in l2_grid {
        let fit = fit_probe(&states, head.survival_dim, &batch, &ProbeConfig { l2, ..config.clone() })?;
        let score = probe_loss(&val_states, head.survival_dim, &val_batch, &fit.beta, fit.bias);
        let better = match &best {
            None => true,
            Some((s, l, _)) => score < *s || (score == *s && l2 > *l),
        };
        if better {
            best = Some((score, l2, fit));
        }
    }
    let (_, l2, fit) = best.expect("grid is non-empty");
    head.task_embeddings = fit.beta.clone();
    head.task_bias = vec![fit.bias];
    Ok((TaskModel { backbone, head, grid }, fit, l2))
}

#[cfg(test)]
pub(super) fn passthrough_for_tests(inner_dim: usize, num_pieces: usize) -> TaskHead {
    passthrough_head(inner_dim, num_pieces)
}
