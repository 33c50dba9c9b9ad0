//! Minimal reverse-mode automatic differentiation over 64-bit dense
//! matrices, plus the neural building blocks and optimizer the rest of the
//! crate composes. The graph is rebuilt per forward pass (sequence lengths
//! vary), values are computed eagerly, and `backward` replays the record in
//! reverse topological order.

pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, GraphError, NodeId};
pub use nn::{conv_window, dropout, Blstm, Linear, LstmCell, Mode};
pub use optim::{OptimError, SgdMomentum, TensorMomentum};
pub use params::{Binding, Param, ParamId, ParamSet};
pub use tensor::{log_sum_exp, softmax_rows, Tensor};
