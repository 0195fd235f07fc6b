//! Reverse-mode differentiation over batched matrix nodes.
//!
//! Every node of a [`Tape`] holds a dense row-major matrix; a batch of
//! samples occupies the rows. This keeps the per-node bookkeeping small
//! compared to the matrix products that dominate training.

mod network;
mod tape;
mod tensor;

pub use network::{bounded_output, Activation, DenseNetwork};
pub use tape::{Gradients, Param, ParamId, ParamSet, Tape, Var};
pub use tensor::Matrix;
