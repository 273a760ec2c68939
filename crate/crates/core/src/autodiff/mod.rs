//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an eager tape: every op computes its value when it is
//! recorded, and [`Graph::backward`] walks the tape once in reverse.
//! Parameters live in a [`ParamSet`] that the graph borrows, so recording a
//! forward pass never copies weights.

mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod graph;
pub mod init;
mod linalg;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use conv::{conv2d_forward, conv_transpose2d_forward, ConvGeometry};
pub use gradcheck::{gradient_check, BlockError, GradCheckOptions, GradCheckReport};
pub(crate) use graph::sigmoid;
pub use graph::{BatchStats, Gradients, Graph, Var};
pub use linalg::gemm;
pub use tensor::{ParamId, ParamSet, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("node {0} does not belong to this graph; record the forward pass first")]
    UnknownNode(usize),
    #[error("non-finite gradient in parameter block `{0}`; step rejected")]
    NonFiniteGradient(String),
    #[error("optimizer state does not match parameter set: {0}")]
    OptimizerMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl AutodiffError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Self::Shape {
            op,
            detail: detail.into(),
        }
    }
}
