//! Configuration, optimization and experiment drivers.

pub mod check;
pub mod config;
pub mod optim;
pub mod runs;
pub mod train;

pub use check::gradcheck_model;
pub use config::{lr_at, ExperimentConfig, Profile, Scheme};
pub use optim::{sgd_step, Sgd};
pub use runs::{
    aggregate, load_experiment_data, run_comparison, run_cross_validation, run_evaluation, run_training,
    run_training_to, synthetic_seed, write_comparison_artifacts, write_cv_artifacts, ComparisonReport, CrossValidationReport, Summary,
    Variant,
};
pub use train::{evaluate, predict_all, train_model, write_training_artifacts, TrainedModel, TrainingHistory};
