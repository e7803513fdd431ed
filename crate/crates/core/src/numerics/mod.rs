//! Dense tensors with hand-derived reverse-mode gradients, Adam, and a
//! central-difference gradient checker.

mod adam;
mod gradcheck;
pub mod ops;
mod tensor;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState, Parameter};
pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use ops::{Conv1dGrads, Conv1dSpec};
pub use tensor::{Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("conv1d kernel size must be odd, got {0}")]
    EvenKernel(usize),
    #[error("conv1d dilation must be positive, got {0}")]
    BadDilation(usize),
}
