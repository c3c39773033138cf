//! Tensors, the differentiation tape, recurrent and highway layers, and the
//! numeric utilities shared by the network modules.

mod gradcheck;
mod highway;
pub mod init;
mod lstm;
mod ops;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use highway::{highway_apply, HighwayUnit};
pub use lstm::{lstm_step, Gate, LstmCell};
pub use ops::{clip_gradients, dropout_apply, log_sum_exp, sigmoid, Mode};
pub use tape::{CustomOp, NodeId, Tape};
pub use tensor::{ParamId, ParamStore, Parameter, Tensor};

/// Seedable generator used everywhere randomness enters (init, dropout, shuffling).
pub type Rng = rand_chacha::ChaCha8Rng;
