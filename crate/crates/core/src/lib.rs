//! Core engine for self-supervised time-to-event pretraining over timestamped
//! event sequences.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It covers:
//!
//! - [`timeline`]: patient event timelines, timestamp normalization, hash
//!   splitting and censored-label subsampling.
//! - [`ontology`]: code hierarchy, conditional-entropy task selection.
//! - [`synth`]: synthetic cohorts with known piecewise-constant hazards.
//! - [`encoder`]: causal local-attention transformer with rotary time
//!   embeddings and hand-written backpropagation.
//! - [`head`]: piecewise-exponential multi-task head, sparse labels and the
//!   streaming likelihood.
//! - [`objectives`]: pretraining loops (time-to-event and next-code).
//! - [`adaptation`]: linear probe, finetuning and from-scratch training.
//! - [`metrics`]: Kaplan-Meier, time-dependent C, Harrell's C, calibration,
//!   integrated Brier score and paired bootstrap.
#![no_std]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

extern crate alloc;

pub mod adaptation;
pub mod encoder;
pub mod error;
pub mod exec;
pub mod head;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod ontology;
pub mod rng;
pub mod synth;
pub mod timeline;

pub use error::{Error, Result};
