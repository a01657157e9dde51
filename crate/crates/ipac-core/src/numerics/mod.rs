//! Dense-tensor engine with reverse-mode differentiation.
//!
//! Tensors are rank-1 or rank-2, row-major, 64-bit. A [`Graph`] is a tape of
//! op records; every op validates shapes, computes its forward value, rejects
//! non-finite results, and records enough state for an exact analytic
//! backward pass. [`gradcheck`] verifies gradients against central finite
//! differences.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{gradcheck, gradcheck_single, GradCheck};
pub use graph::{Graph, NodeId, IGNORE_INDEX};
pub use tensor::Tensor;

use alloc::string::String;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum NumericsError {
    /// Operand shapes do not line up for the requested op.
    ShapeMismatch(String),
    /// An op produced NaN or infinity; the graph is in an error state.
    NonFinite(&'static str),
    /// backward() called on a non-scalar node.
    NotScalar,
    /// backward() called twice on the same tape.
    GraphConsumed,
    /// A scalar argument or index is out of its admitted range.
    InvalidValue(String),
}

impl fmt::Display for NumericsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericsError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            NumericsError::NonFinite(op) => write!(f, "non-finite value produced by `{op}`"),
            NumericsError::NotScalar => write!(f, "backward requires a scalar loss node"),
            NumericsError::GraphConsumed => {
                write!(f, "backward already ran on this graph; build a fresh tape")
            }
            NumericsError::InvalidValue(msg) => write!(f, "invalid value: {msg}"),
        }
    }
}

impl core::error::Error for NumericsError {}
