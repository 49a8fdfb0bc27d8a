//! Dense `f64` arrays with a reverse-mode tape, Adam, and a finite-difference
//! gradient checker.

mod adam;
mod array;
mod checkpoint;
mod gradcheck;
pub mod loss;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use array::Tensor;
#[allow(unused_imports)]
pub(crate) use array::{gemm, Operand};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use params::{ParamId, ParamStore};
pub(crate) use tape::{gelu, sigmoid};
pub use tape::{Gradients, Mode, Tape, Var};

/// Scalar activations shared with evaluation code.
pub mod activation {
    pub fn sigmoid(x: f64) -> f64 {
        super::sigmoid(x)
    }

    pub fn gelu(x: f64) -> f64 {
        super::gelu(x)
    }
}
