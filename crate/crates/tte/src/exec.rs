use std::num::NonZeroUsize;

use tte_core::exec::Executor;

use crate::error::{PipelineError, Result};

/// Environment variable holding the worker thread count.
pub const THREADS_VAR: &str = "TTE_THREADS";

/// Runs per-item work on scoped threads. Items are split into contiguous
/// chunks and results come back in index order, so reductions see the same
/// order for any thread count.
#[derive(Debug, Clone, Copy)]
pub struct Threads {
    n: usize,
}

impl Threads {
    pub fn new(n: usize) -> Self {
        Threads { n: n.max(1) }
    }

    /// `TTE_THREADS` if set, otherwise the available parallelism.
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_VAR) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Self::new(n)),
                _ => Err(PipelineError::Config(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
            },
            Err(_) => Ok(Self::new(std::thread::available_parallelism().map_or(1, NonZeroUsize::get))),
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }
}

impl Executor for Threads {
    fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.n.min(len);
        if workers <= 1 {
            return (0..len).map(f).collect();
        }
        let chunk = len.div_ceil(workers);
        let f = &f;
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..len)
                .step_by(chunk)
                .map(|start| s.spawn(move || (start..(start + chunk).min(len)).map(f).collect::<Vec<T>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("worker thread panicked")).collect()
        })
    }
}
