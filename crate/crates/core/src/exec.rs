//! Execution strategy for per-patient work inside a training step.
//!
//! The core crate runs everything on the calling thread. Callers with a
//! thread pool implement [`Executor`]; results are always reduced in index
//! order, so the outcome does not depend on the number of workers.

use alloc::vec::Vec;

pub trait Executor: Sync {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..len).map(f).collect()
    }
}
