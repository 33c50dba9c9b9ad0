//! Structured energy E(x, y) with a BLSTM(+char-CNN) feature network, exact
//! inference (Viterbi, forward log-partition, brute-force oracle), and CRF
//! conditional log-likelihood training.

pub mod energy;
pub mod model;
pub mod train;
pub mod vocab;

pub use energy::{
    brute_force_decode, discrete_energy, energy_node, log_partition, log_partition_node, one_hot,
    relaxed_energy, viterbi, DecodeError,
};
pub use model::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CrfConfig, EnergyModel,
    Variant, CHECKPOINT_VERSION,
};
pub use train::{dev_accuracy, train_crf, EpochLog, TrainConfig, TrainError, TrainOutcome};
pub use vocab::TokenVocab;
