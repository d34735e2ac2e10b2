use alloc::vec;
use alloc::vec::Vec;

use super::labels::{SparseEntry, SurvivalBatch};
use super::params::TaskHead;
use crate::error::{Error, Result};

/// Tasks evaluated together in the streaming pass. Any block size gives
/// bit-identical results.
pub const DEFAULT_TASK_BLOCK: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overflow {
    pub event: usize,
    pub task: usize,
    pub piece: usize,
    pub log_hazard: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    /// `Σ λ·U − δ·log λ` over all cells.
    pub loss: f64,
    /// Gradient with respect to the states, `events × (pieces · survival_dim)`.
    pub grad_states: Vec<f64>,
    pub grad_embeddings: Vec<f64>,
    pub grad_bias: Vec<f64>,
    /// First cell whose hazard overflowed; `loss` is then `+∞`.
    pub overflow: Option<Overflow>,
}

struct Cursor<'a> {
    entries: &'a [SparseEntry],
    pos: usize,
}

impl<'a> Cursor<'a> {
    /// Entries for `(event, piece)` with task in `[lo, hi)`; the cursor only
    /// moves forward because cells are visited in sorted order.
    fn take(&mut self, event: u32, piece: u32, lo: u32, hi: u32) -> &'a [SparseEntry] {
        let key = |e: &SparseEntry| (e.event, e.piece, e.task);
        while self.pos < self.entries.len() && key(&self.entries[self.pos]) < (event, piece, lo) {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.entries.len() && key(&self.entries[self.pos]) < (event, piece, hi) {
            self.pos += 1;
        }
        &self.entries[start..self.pos]
    }
}

/// Piecewise-exponential negative log-likelihood and its gradients in a
/// single pass over `(event, piece)` cells.
///
/// For each cell the log-hazards of one block of tasks are computed, every
/// task first gets the default censored term `λ·U0` (gradient `λ·U0`), then
/// the sparse entries of that block replace it: an event entry contributes
/// `λ·U − log λ` (gradient `λ·U − 1`), an override `λ·U`. Per-task totals are
/// added to the loss and gradients in task order, so the result does not
/// depend on `block`. The full `events × tasks × pieces` tensor never exists.
pub fn fused_nll(states: &[f64], head: &TaskHead, batch: &SurvivalBatch, block: usize) -> Result<FusedOutput> {
    let b = head.survival_dim;
    let p_n = head.num_pieces;
    let k_n = head.num_tasks;
    let width = p_n * b;
    if batch.num_pieces != p_n || batch.num_tasks != k_n || states.len() != batch.num_events * width {
        return Err(Error::shape("states, head, and batch disagree on events, tasks, or pieces"));
    }
    let block = block.max(1);
    let mut out = FusedOutput {
        loss: 0.0,
        grad_states: vec![0.0; states.len()],
        grad_embeddings: vec![0.0; k_n * b],
        grad_bias: vec![0.0; k_n],
        overflow: None,
    };
    let mut events = Cursor { entries: &batch.event_entries, pos: 0 };
    let mut overrides = Cursor { entries: &batch.censor_overrides, pos: 0 };
    let mut log_hazard = vec![0.0; block];
    let mut hazard = vec![0.0; block];
    let mut contrib = vec![0.0; block];
    let mut grad = vec![0.0; block];

    for j in 0..batch.num_events {
        for p in 0..p_n {
            let m = &states[j * width + p * b..j * width + (p + 1) * b];
            let u0 = batch.default_exposure[j * p_n + p];
            let mut lo = 0;
            while lo < k_n {
                let hi = (lo + block).min(k_n);
                let len = hi - lo;
                for (i, k) in (lo..hi).enumerate() {
                    let beta = &head.task_embeddings[k * b..(k + 1) * b];
                    let z = crate::linalg::dot(m, beta) + head.task_bias[k];
                    let lam = libm::exp(z);
                    if !lam.is_finite() && out.overflow.is_none() {
                        out.overflow = Some(Overflow { event: j, task: k, piece: p, log_hazard: z });
                    }
                    log_hazard[i] = z;
                    hazard[i] = lam;
                    contrib[i] = lam * u0;
                    grad[i] = lam * u0;
                }
                for e in events.take(j as u32, p as u32, lo as u32, hi as u32) {
                    let i = e.task as usize - lo;
                    contrib[i] = hazard[i] * e.time - log_hazard[i];
                    grad[i] = hazard[i] * e.time - 1.0;
                }
                for e in overrides.take(j as u32, p as u32, lo as u32, hi as u32) {
                    let i = e.task as usize - lo;
                    contrib[i] = hazard[i] * e.time;
                    grad[i] = hazard[i] * e.time;
                }
                let dm = &mut out.grad_states[j * width + p * b..j * width + (p + 1) * b];
                for i in 0..len {
                    let k = lo + i;
                    out.loss += contrib[i];
                    let g = grad[i];
                    if g == 0.0 {
                        continue;
                    }
                    out.grad_bias[k] += g;
                    let beta = &head.task_embeddings[k * b..(k + 1) * b];
                    let dbeta = &mut out.grad_embeddings[k * b..(k + 1) * b];
                    for c in 0..b {
                        dm[c] += g * beta[c];
                        dbeta[c] += g * m[c];
                    }
                }
                lo = hi;
            }
        }
    }
    if out.overflow.is_some() {
        out.loss = f64::INFINITY;
    }
    Ok(out)
}
