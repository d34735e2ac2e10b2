use alloc::vec;
use alloc::vec::Vec;

use super::fused::FusedOutput;
use super::labels::SurvivalBatch;
use super::params::TaskHead;
use crate::error::{Error, Result};

/// Fully materialised `δ` and `U` tensors, `events × tasks × pieces`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLabels {
    pub num_events: usize,
    pub num_tasks: usize,
    pub num_pieces: usize,
    pub indicator: Vec<f64>,
    pub exposure: Vec<f64>,
}

impl DenseLabels {
    pub fn zeros(num_events: usize, num_tasks: usize, num_pieces: usize) -> Self {
        let len = num_events * num_tasks * num_pieces;
        DenseLabels { num_events, num_tasks, num_pieces, indicator: vec![0.0; len], exposure: vec![0.0; len] }
    }

    pub fn index(&self, event: usize, task: usize, piece: usize) -> usize {
        (event * self.num_tasks + task) * self.num_pieces + piece
    }

    pub fn from_batch(batch: &SurvivalBatch) -> Self {
        let mut d = Self::zeros(batch.num_events, batch.num_tasks, batch.num_pieces);
        for j in 0..batch.num_events {
            for k in 0..batch.num_tasks {
                for p in 0..batch.num_pieces {
                    let i = d.index(j, k, p);
                    d.exposure[i] = batch.default_exposure[j * batch.num_pieces + p];
                }
            }
        }
        for e in &batch.event_entries {
            let i = d.index(e.event as usize, e.task as usize, e.piece as usize);
            d.indicator[i] = 1.0;
            d.exposure[i] = e.time;
        }
        for e in &batch.censor_overrides {
            let i = d.index(e.event as usize, e.task as usize, e.piece as usize);
            d.exposure[i] = e.time;
        }
        d
    }
}

/// Reference implementation: materialises every log-hazard, then sums
/// `λ·U − δ·log λ` cell by cell.
pub fn dense_nll(states: &[f64], head: &TaskHead, labels: &DenseLabels) -> Result<FusedOutput> {
    let (n, k_n, p_n, b) = (labels.num_events, head.num_tasks, head.num_pieces, head.survival_dim);
    if labels.num_tasks != k_n || labels.num_pieces != p_n || states.len() != n * p_n * b {
        return Err(Error::shape("dense labels do not match head"));
    }
    let mut log_hazard = vec![0.0; n * k_n * p_n];
    for j in 0..n {
        for k in 0..k_n {
            for p in 0..p_n {
                log_hazard[labels.index(j, k, p)] = head.log_hazard(states, j, k, p);
            }
        }
    }
    let hazard: Vec<f64> = log_hazard.iter().map(|&z| libm::exp(z)).collect();
    let mut loss = 0.0;
    let mut dlogit = vec![0.0; hazard.len()];
    for i in 0..hazard.len() {
        loss += hazard[i] * labels.exposure[i] - labels.indicator[i] * log_hazard[i];
        dlogit[i] = hazard[i] * labels.exposure[i] - labels.indicator[i];
    }
    let mut grad_states = vec![0.0; states.len()];
    let mut grad_embeddings = vec![0.0; k_n * b];
    let mut grad_bias = vec![0.0; k_n];
    for j in 0..n {
        for k in 0..k_n {
            for p in 0..p_n {
                let g = dlogit[labels.index(j, k, p)];
                grad_bias[k] += g;
                for c in 0..b {
                    grad_states[j * p_n * b + p * b + c] += g * head.task_embeddings[k * b + c];
                    grad_embeddings[k * b + c] += g * states[j * p_n * b + p * b + c];
                }
            }
        }
    }
    let overflow = hazard.iter().any(|h| !h.is_finite());
    Ok(FusedOutput {
        loss: if overflow { f64::INFINITY } else { loss },
        grad_states,
        grad_embeddings,
        grad_bias,
        overflow: None,
    })
}
