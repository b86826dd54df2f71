//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! The crate is the numerical core for the herd-life models: a [`Tape`]
//! records forward operations and replays them backwards to accumulate
//! gradients, [`AdamState`] applies bias-corrected Adam updates, and
//! [`grad_check`] compares analytic gradients against central finite
//! differences.
//!
//! All math is generic over the scalar type through [`Scalar`]; the
//! concrete aliases at the crate root ([`TensorF64`], [`TapeF64`], ...)
//! are what the rest of the workspace uses.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

mod adam;
mod error;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use error::TensorError;
pub use gradcheck::{grad_check, DEFAULT_GRAD_CHECK_STEP};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Scalar types the tensor machinery can run on.
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` constant into the active scalar type.
pub(crate) fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type TapeF32 = Tape<f32>;
pub type TapeF64 = Tape<f64>;
pub type AdamStateF64 = AdamState<f64>;
