//! Minimal numerical core: tensors, named parameters, layers with explicit
//! backward passes, optimizers and a finite-difference gradient checker.
//!
//! Everything is 64-bit and single-threaded; callers parallelize across
//! independent work units.

mod gradcheck;
mod layers;
mod optim;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, Subset};
pub use layers::{
    affine, affine_backward, embed, embed_backward, log_softmax, rnn_step, rnn_step_backward,
    softmax, softmax_xent, RnnCell, RnnCellGrads,
};
pub use optim::{clip_grad_norm, sgd_update, AdamState};
pub use tensor::{Gradients, ParamSet, Parameter, Tensor};

/// Half-width of the uniform distribution used to initialize weights.
pub const INIT_RANGE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NcoreError {
    #[error("shape mismatch in {what}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
}
