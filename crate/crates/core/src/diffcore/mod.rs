//! Deterministic differentiable-computation core: tensors, a reverse-mode
//! graph, multilayer perceptrons, Adam, and the dense linear algebra the
//! rest of the crate relies on.

pub mod adam;
pub mod graph;
pub mod linalg;
pub mod mlp;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use linalg::{least_squares_fit, pinv, svd, Svd};
pub use mlp::{Activation, Linear, Mlp, MlpVars};
pub use tensor::{matmul_t, Tensor};
