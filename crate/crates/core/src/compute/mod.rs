//! Dense tensors, a recording graph and reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Parameters live in a
//! [`ParamStore`] that the graph borrows; backward passes accumulate into
//! per-parameter gradient buffers held by the graph until they are taken
//! with [`Graph::take_param_grads`].

mod graph;
mod kernels;
mod layers;
mod params;
mod real;
mod tensor;

pub use graph::{nll_from_logits, Graph, Mode, Var};
pub use layers::LstmCell;
pub use params::{ParamId, ParamStore};
pub use real::{DType, Real};
pub use tensor::Tensor;
