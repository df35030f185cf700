//! Numerical substrate: matrices, layers, losses, Adam and gradient checks.

mod adam;
pub mod gradcheck;
mod layer;
mod loss;
mod matrix;
mod sequential;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{
    check_sequential, grad_check, GradCheckOptions, GradCheckReport, GradTarget, LossTarget,
};
pub use layer::{
    sigmoid, BatchNorm, Dropout, Layer, Linear, Mode, Param, BATCH_NORM_EPS, BATCH_NORM_MOMENTUM,
};
pub use loss::{bce_loss, mae_loss, nll_loss, LossValue, BCE_EPS};
pub use matrix::Matrix;
pub use sequential::Sequential;
