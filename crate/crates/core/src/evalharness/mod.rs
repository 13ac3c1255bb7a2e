//! Desk-scale evaluation target: a synthetic spiral task, a small rectified
//! classifier trained on it, and value-level corruption metrics.

mod dataset;
mod metrics;
mod model;
pub(crate) use model::{argmax, relu};
mod train;

pub use dataset::{
    gen_dataset, gen_dataset_sized, Dataset, EvalSet, DEFAULT_EVAL_SIZE, DEFAULT_TRAIN_SIZE, NUM_CLASSES,
};
pub use metrics::{numeric_metrics, NumericMetrics};
pub use model::{accuracy, DenseLayer, TinyModel, WideModel};
pub use train::{train_model, train_model_with, TrainConfig, TrainOutcome};
