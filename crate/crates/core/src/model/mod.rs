//! Small softmax classifiers with hand-written backpropagation.
//!
//! Parameters live in one flat vector; each dense layer owns a row-major
//! `fan_in x fan_out` weight block followed by an optional bias block. Hidden
//! layers apply the architecture's activation and the output layer feeds a
//! softmax. All kernels are generic over [`Scalar`] so gradient checks can run
//! in `f64` while large training runs use `f32`.

mod arch;
mod checkpoint;
mod fgsm;
mod loss;
mod mlp;

pub use arch::{Activation, Architecture, LayerSlice};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use fgsm::{fgsm_batch, fgsm_perturb, sign};
pub use loss::{loss_per_sample, LossKind, CCE_FLOOR};
pub use mlp::{Batch, ModelState};

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type of a model.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ToPrimitive
    + ScalarOperand
    + Default
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Byte width, used as the precision tag in checkpoints.
    const WIDTH: u8;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits in scalar type")
    }

    fn to_le(self, out: &mut Vec<u8>);
}

impl Scalar for f32 {
    const WIDTH: u8 = 4;

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl Scalar for f64 {
    const WIDTH: u8 = 8;

    fn to_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}
