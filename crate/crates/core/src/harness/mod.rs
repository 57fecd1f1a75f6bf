//! Training, zero-shot evaluation, synthetic tasks and gradient checking.

mod config;
mod dataset;
mod eval;
mod gradcheck;
mod synth;
mod train;

pub use config::TrainConfig;
pub use dataset::{EvalSet, ZslDataset};
pub use eval::{evaluate, evaluate_set, predict_scores, EvalReport, HitAt, PerClass, Setting, HIT_KS};
pub use gradcheck::{grad_check, GradCheckDims, GradCheckReport, GradProblem, FD_STEP};
pub use synth::{synth_dataset, synth_with, SynthConfig, SynthFixture};
pub use train::{arch_for, predict_classifiers, seen_mse, train, TrainOutcome, Trainer};
