//! Trainable per-voxel FOD regressor.
//!
//! A small MLP predicts FOD coefficients from neighborhood SH features
//! of six-direction signal subsets. The module covers feature
//! extraction, exact backprop, Adam with decoupled weight decay, the
//! train/fine-tune loops with validation-based model selection, and
//! whole-volume prediction.

mod features;
mod model;
mod optim;
mod train;

pub use features::{
    featurize, sh_feature_volume, six_directions, wm_columns, FEATURE_LMAX, N_FEATURES,
};
pub use model::{loss_mse, EstimatorModel, ForwardCache, Gradients};
pub use optim::{adam_step, AdamState};
pub use train::{
    collect_samples, fine_tune, predict_volume, train, TrainConfig, TrainHistory, VoxelSamples,
    DEFAULT_DROPOUT, DEFAULT_HIDDEN,
};
