//! Dense tensor ops with reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
pub mod kernels;

pub use gradcheck::finite_difference_check;
pub use graph::{Activation, Gradients, Graph, NodeId, LEAKY_RELU_SLOPE};
