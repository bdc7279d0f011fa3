//! Neural surrogate of the joint-sphere occupancy.

pub mod dataset;
pub mod mlp;
pub mod surrogate;

pub use dataset::{encode_input, exact_targets, gen_dataset, read_dataset, write_dataset, SfoSample, TimeEncoding};
pub use mlp::{grad_check, Activation, EpochStats, Mlp, Normalizer, TrainConfig};
pub use surrogate::{
    decode_grad, grad_relative_errors, interval_sensitivity, median, NeuralSfo, SphereJacobians, SurrogateConfig,
    TrainingReport,
};
