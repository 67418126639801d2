//! Deterministic reverse-mode differentiable primitives: linear, LSTM,
//! multi-head attention and softmax, plus an Adam optimizer. Each layer
//! implements an explicit backward pass that accumulates gradients into its
//! [`ParamTensor`]s; composite models chain the backward calls in reverse.

pub mod adam;
pub mod attention;
pub mod init;
pub mod linear;
pub mod lstm;
pub mod tensor;

pub use adam::Adam;
pub use attention::{multi_head_attention, multi_head_attention_backward, softmax_rows, AttentionBlock};
pub use linear::Linear;
pub use lstm::Lstm;
pub use tensor::ParamTensor;
