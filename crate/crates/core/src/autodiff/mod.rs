//! Minimal reverse-mode differentiation over dense `f64` matrices, plus the
//! parameter store and Adam optimizer used for training.

mod graph;
mod matrix;
mod params;

pub(crate) use graph::softmax_in_place;
pub use graph::{sigmoid, softmax_rows, DiffNode, Graph, Var};
pub use matrix::Matrix;
pub use params::{AdamConfig, BoundParams, ParameterStore};
