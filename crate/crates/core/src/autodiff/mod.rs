//! Tape-based reverse-mode differentiation over [`Tensor`](crate::Tensor).

mod graph;
pub mod gradcheck;
mod kernels;

pub use graph::{Elementwise, Gradients, Graph, Var};
pub use kernels::channel_stats;
