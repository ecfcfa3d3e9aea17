//! Evolving channel-scoring functions for neural network pruning.
//!
//! A scoring function is an [`ExprTree`] over a fixed operand set (layer and
//! channel kernels, batch-norm parameters, feature maps and their class
//! partitions) and a fixed operator set. The [`evolve`] module searches that
//! space with genetic programming; [`tasks`] supplies the fitness tasks and
//! [`net`] the small trainable networks the pruning tasks operate on.

pub mod config;
pub mod error;
pub mod evolve;
pub mod ir;
pub mod library;
pub mod net;
pub mod tasks;
pub mod tensor;

pub use error::{EvalFailure, EvalResult};
pub use ir::{ChannelContext, ExprTree, Kind, Node, Op, Operand};
pub use tensor::{KernelConfig, MapCollection, Tensor, Value};
