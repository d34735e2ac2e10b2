//! Piecewise-exponential multi-task survival head.
//!
//! Log-hazards are low rank: a shared linear map turns each representation
//! into one `survival_dim` state vector per time piece, and every task owns
//! an embedding of the same width (plus a scalar bias), so
//! `log λ[event, task, piece] = state[event, piece] · embedding[task] + bias[task]`.
//!
//! Labels are stored sparsely ([`SurvivalBatch`]) and the negative
//! log-likelihood is evaluated in one streaming pass ([`fused_nll`]) without
//! materialising the `events × tasks × pieces` tensors.

mod dense;
mod fused;
mod grid;
mod labels;
mod memory;
mod params;
mod predict;

pub use dense::{dense_nll, DenseLabels};
pub use fused::{fused_nll, FusedOutput, Overflow, DEFAULT_TASK_BLOCK};
pub use grid::{fit_pieces, PieceGrid};
pub use labels::{build_labels, build_labels_for_positions, LabelPolicy, SparseEntry, SurvivalBatch};
pub use memory::{memory_report, MemoryReport};
pub use params::TaskHead;
pub use predict::{PiecewiseHazard, SurvivalCurve};
