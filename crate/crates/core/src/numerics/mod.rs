//! Dense tensors, differentiable primitives and gradient verification.

mod gemm;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use nn::{batch_matmul, linear_apply, mlp_apply, prelu, Linear, LinearMap, Mlp, PRELU_INIT};
pub use params::{glorot_uniform, uniform, Param, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
