use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{add_row_bias, matmul, matmul_nt_acc, matmul_tn_acc, sum_rows_acc};
use crate::rng::{standard_normal, DetRng};

/// Low-rank log-hazard head.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub inner_dim: usize,
    pub num_pieces: usize,
    pub survival_dim: usize,
    pub num_tasks: usize,
    /// `inner_dim × (num_pieces · survival_dim)`.
    pub projection: Vec<f64>,
    /// `num_pieces · survival_dim`.
    pub projection_bias: Vec<f64>,
    /// `num_tasks × survival_dim`.
    pub task_embeddings: Vec<f64>,
    /// `num_tasks`.
    pub task_bias: Vec<f64>,
}

impl TaskHead {
    pub fn zeros(inner_dim: usize, num_pieces: usize, survival_dim: usize, num_tasks: usize) -> Self {
        TaskHead {
            inner_dim,
            num_pieces,
            survival_dim,
            num_tasks,
            projection: vec![0.0; inner_dim * num_pieces * survival_dim],
            projection_bias: vec![0.0; num_pieces * survival_dim],
            task_embeddings: vec![0.0; num_tasks * survival_dim],
            task_bias: vec![0.0; num_tasks],
        }
    }

    /// Gaussian task embeddings with σ = 0.02, projection scaled by
    /// `1/sqrt(inner_dim)`, and task biases at `ln(rate)` when base rates
    /// (events per day of exposure) are supplied.
    pub fn init(
        inner_dim: usize,
        num_pieces: usize,
        survival_dim: usize,
        num_tasks: usize,
        base_rates: Option<&[f64]>,
        rng: &mut DetRng,
    ) -> Self {
        let mut head = Self::zeros(inner_dim, num_pieces, survival_dim, num_tasks);
        let scale = 1.0 / libm::sqrt(inner_dim as f64);
        head.projection.iter_mut().for_each(|v| *v = scale * standard_normal(rng));
        head.task_embeddings.iter_mut().for_each(|v| *v = 0.02 * standard_normal(rng));
        if let Some(rates) = base_rates {
            for (b, &r) in head.task_bias.iter_mut().zip(rates) {
                *b = libm::log(r.max(1e-12));
            }
        }
        head
    }

    pub fn state_width(&self) -> usize {
        self.num_pieces * self.survival_dim
    }

    /// Per-piece states `n × (num_pieces · survival_dim)` for representations
    /// `n × inner_dim`.
    pub fn states(&self, representations: &[f64]) -> Vec<f64> {
        let n = representations.len() / self.inner_dim;
        let w = self.state_width();
        let mut out = vec![0.0; n * w];
        matmul(representations, &self.projection, &mut out, n, self.inner_dim, w);
        add_row_bias(&mut out, &self.projection_bias);
        out
    }

    /// Backpropagates state gradients through the projection: accumulates
    /// into `grads.projection`/`projection_bias` and returns the gradient with
    /// respect to the representations.
    pub fn states_backward(&self, representations: &[f64], d_states: &[f64], grads: &mut TaskHead) -> Vec<f64> {
        let n = representations.len() / self.inner_dim;
        let w = self.state_width();
        matmul_tn_acc(representations, d_states, &mut grads.projection, n, self.inner_dim, w);
        sum_rows_acc(d_states, &mut grads.projection_bias);
        let mut d_repr = vec![0.0; n * self.inner_dim];
        matmul_nt_acc(d_states, &self.projection, &mut d_repr, n, self.inner_dim, w);
        d_repr
    }

    /// `state · embedding[task] + bias[task]` for piece `piece` of `states`
    /// row `row`.
    pub fn log_hazard(&self, states: &[f64], row: usize, task: usize, piece: usize) -> f64 {
        let b = self.survival_dim;
        let m = &states[row * self.state_width() + piece * b..row * self.state_width() + (piece + 1) * b];
        crate::linalg::dot(m, &self.task_embeddings[task * b..(task + 1) * b]) + self.task_bias[task]
    }

    /// Trainable scalars attributable to one task (its embedding).
    pub fn embedding_params_per_task(&self) -> usize {
        self.survival_dim
    }

    /// What a full-rank map from a representation to one task's per-piece
    /// log-hazards would need.
    pub fn full_rank_params_per_task(&self) -> usize {
        self.inner_dim * self.num_pieces
    }

    pub fn tensor_names(&self) -> Vec<String> {
        ["projection", "projection_bias", "task_embeddings", "task_bias"]
            .iter()
            .map(|n| format!("head.{n}"))
            .collect()
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        vec![&self.projection, &self.projection_bias, &self.task_embeddings, &self.task_bias]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![&mut self.projection, &mut self.projection_bias, &mut self.task_embeddings, &mut self.task_bias]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.inner_dim, self.num_pieces, self.survival_dim, self.num_tasks)
    }

    pub fn add_assign(&mut self, other: &TaskHead) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            crate::linalg::axpy(1.0, b, a);
        }
    }
}
