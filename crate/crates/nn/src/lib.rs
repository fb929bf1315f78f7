//! Minimal reverse-mode automatic differentiation over dense `f64` tensors,
//! plus the layers, optimizers and checkpoint container used by the models.

mod checkpoint;
mod error;
mod graph;
mod kernels;
pub mod gradcheck;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use graph::{log_sigmoid, sigmoid, Graph, Var};
pub use optim::{clip_tensor, clip_weights, Optimizer, OptimizerKind};
pub use params::{Binding, ParamId, ParamStore};
pub use tensor::Tensor;

/// Output length of a convolution along one axis.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    kernels::conv_out_len(len, kernel, stride, padding)
}
