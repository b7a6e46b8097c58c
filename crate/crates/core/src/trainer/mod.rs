//! Adversarial training: configuration, optimiser, the per-step update,
//! the epoch loop with checkpoint/resume, and the gradient-check suite.

mod adam;
mod config;
mod nets;
mod run;
mod runlog;
mod step;
mod suite;

pub use adam::Adam;
pub use config::{TrainConfig, SEED_ENV};
pub use nets::{checkpoint_config, init_params, load_generator, stack_batch, Nets, CHECKPOINT_KIND};
pub use run::{checkpoint_name, epoch_plan, train_loop, train_on_dataset, TrainOutcome, FINAL_CHECKPOINT, RUNLOG_FILE};
pub use runlog::{RunLog, StepRecord, RUNLOG_HEADER};
pub use step::{train_step, StepLosses};
pub use suite::{
    gradcheck_suite, GradcheckEntry, GradcheckReport, GRADCHECK_TOLERANCE, LOSS_CHECK_CANDIDATES, LOSS_CHECK_COORDS,
    LOSS_CHECK_SIZE,
};
