//! Behavioral cloning of the estimator and controller by surrogate-gradient
//! BPTT, and the bias-free ReLU baseline trained with the same machinery.

pub mod adam;
pub mod ann;
pub mod bptt;
pub mod checkpoint;
pub mod dataset;
pub mod init;
pub mod loss;
pub mod model;
pub mod pipeline;
pub mod trainer;

pub use bptt::{backward, forward_record, surrogate_grad, SnnTrace};
pub use init::{init_subnetwork, InitConfig};
pub use loss::{
    huber, loss_controller, loss_estimator, objective_grad, pearson, pearson_batch, LossConfig,
    Objective,
};
pub use model::{GradConfig, Trainable};
pub use adam::{Adam, AdamConfig};
pub use dataset::{
    log_gyro_bias, controller_refs,
    controller_features, estimator_features, rms_scales, scale, unscale, window_dataset, Features,
    ScaledDataset, Window, WindowConfig,
};
pub use ann::{ann_forward, init_ann, AnnLayer, AnnNet, AnnRuntime};
pub use checkpoint::{Checkpoint, Model, Role};
pub use pipeline::{fit, prepare, role_features, Fitted, ModelKind, Prepared, Sizes};
pub use trainer::{evaluate_dataset, train, write_history_csv, EpochStats, TrainConfig, TrainOutcome, Trainer};
