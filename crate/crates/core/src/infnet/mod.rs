//! Inference networks: feed-forward approximations of structured argmin,
//! trained against a frozen energy model plus a local cross-entropy loss.

pub mod model;
pub mod train;

pub use model::{
    discretize, token_loss, token_loss_node, Family, InfNetConfig, InfNetModel, PROB_CLAMP,
};
pub use train::{
    infnet_dev_accuracy, lambda_at, train_infnet, train_local_baseline, InfNetOutcome,
    InfNetTrainConfig, InfNetTrainError,
};
