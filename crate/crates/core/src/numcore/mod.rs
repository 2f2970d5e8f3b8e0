//! Dense matrices and the reverse-mode tape that differentiates the model graph.

mod matrix;
mod tape;

pub use matrix::{cross_entropy_value, dense_layer, softmax, Activation, Matrix, Vector};
pub use tape::{Gradients, NodeId, Tape};
