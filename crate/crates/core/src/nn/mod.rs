//! Small deterministic neural-network kernels with manual backward passes.

mod adam;
mod lstm;
mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, DEFAULT_LEARNING_RATE};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams, LstmState};
pub use ops::{
    dropout_apply, dropout_backward, dropout_forward, log_add, log_softmax, log_softmax_in_place, log_sum_exp, Linear,
};
pub use params::ParameterSet;
pub use tensor::{gemm, Tensor2};
