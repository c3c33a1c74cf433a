//! Minimal dense-tensor numeric core: the layers the layout networks need,
//! reverse-mode gradients for each, the Adam optimizer, a finite-difference
//! gradient checker, and the checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport, ParamCheck};
pub use layers::{
    backward_stack, forward_stack, BatchNorm2d, Conv2d, Layer, Linear, Mode, ReLU, Sigmoid,
    Upsample2x,
};
pub use tensor::{Param, Tensor};
