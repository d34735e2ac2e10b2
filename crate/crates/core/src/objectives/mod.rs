//! Pretraining loops: the multi-task time-to-event likelihood and the
//! next-code baseline, sharing one optimizer and early-stopping loop.

mod next_code;
mod optim;
mod train;
mod tte;

pub use next_code::{next_code_loss, pretrain_next_code, NextCodeHead, NextCodeModel, NextCodeOutput, NextCodeParams};
pub use optim::{Adam, AdamConfig, Parameters, Schedule};
pub use train::{
    train, validation_loss, Contribution, EpochRecord, Objective, Resume, StepRecord, TrainConfig, TrainOutcome, TrainState,
};
pub use tte::{
    calibrate_head, init_tte_params, pretrain_tte, resume_tte, survival_contribution, tte_loss, HeadConfig, TteModel, TteParams,
    LOSS_NORMALIZATION,
};
