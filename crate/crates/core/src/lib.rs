//! Neural linear-chain CRFs for sequence labeling, with exact inference
//! (Viterbi, forward algorithm) and approximate inference (gradient descent
//! in a relaxed output space, inference networks, instance tailoring, warm
//! starts), plus a benchmark harness that measures speed, accuracy, energy,
//! and search error for every method on the same footing.

pub mod bench;
pub mod corpus;
pub mod crf;
pub mod infnet;
pub mod numgrad;
pub mod relaxinf;

pub use numgrad::{Graph, NodeId, ParamSet, Tensor};
