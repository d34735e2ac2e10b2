use core::mem::size_of;

use super::labels::{SparseEntry, SurvivalBatch};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryReport {
    pub sparse_bytes: usize,
    pub dense_bytes: usize,
    pub ratio: f64,
}

/// Bytes held by the sparse label layout versus dense `δ` and `U` tensors of
/// shape `events × num_tasks × num_pieces` in the same scalar type.
pub fn memory_report(batch: &SurvivalBatch, num_tasks: usize, num_pieces: usize) -> MemoryReport {
    let sparse_bytes = batch.default_exposure.len() * size_of::<f64>()
        + (batch.event_entries.len() + batch.censor_overrides.len()) * size_of::<SparseEntry>();
    let dense_bytes = 2 * batch.num_events * num_tasks * num_pieces * size_of::<f64>();
    MemoryReport { sparse_bytes, dense_bytes, ratio: sparse_bytes as f64 / dense_bytes.max(1) as f64 }
}
