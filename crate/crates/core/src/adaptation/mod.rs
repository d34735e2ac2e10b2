//! Turning a pretrained model into a model for one target task.
//!
//! A task asks for the time from the end of a random visit (with at least a
//! year of history) to the first recorded target code. Adaptation either
//! fits only a new task vector on frozen representations (probe), updates
//! everything starting from the probe (finetune), or trains the same
//! architecture from random initialization (scratch).

mod labels;
mod model;
mod probe;
mod tune;

pub use labels::{make_task_labels, TargetTask, TaskSample, MIN_HISTORY_DAYS};
pub use model::{representations, task_batch, Backbone, TaskModel};
pub use probe::{fit_probe, linear_probe, linear_probe_selected, probe_loss, Pretrained, ProbeConfig, ProbeFit};
pub use tune::{finetune, task_loss, train_scratch, ScratchConfig};

#[cfg(test)]
mod tests;
