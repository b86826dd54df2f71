use thiserror::Error;

/// Errors raised by tensor construction, tape operations and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape must have at least one extent")]
    EmptyShape,

    #[error("shape {0:?} contains a zero extent")]
    ZeroExtent(Vec<usize>),

    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch in {op}: {details}")]
    ShapeMismatch { op: &'static str, details: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("softmax row {0} is fully masked")]
    FullyMaskedRow(usize),

    #[error("empty batch")]
    EmptyBatch,

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("backward already ran on this tape")]
    BackwardConsumed,

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("finite-difference step must be positive")]
    NonPositiveStep,

    #[error("parameter/gradient count mismatch: {params} params, {grads} grads")]
    GradientCount { params: usize, grads: usize },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, details: impl Into<String>) -> Self {
        TensorError::ShapeMismatch {
            op,
            details: details.into(),
        }
    }
}
