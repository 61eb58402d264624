//! Dense-tensor arithmetic for small temporal convolutional networks.
//!
//! Every layer type comes as a pair of plain functions (forward, backward)
//! rather than a recorded graph. Ops are generic over [`Real`] so the same
//! code runs in `f32` for training and in `f64` for finite-difference checks.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod error;
pub mod gemm;
pub mod gradcheck;
pub mod loss;
pub mod real;
pub mod tensor;

pub use activation::{dropout, relu, relu_backward, relu_inplace, DropoutMask};
pub use adam::{Adam, AdamConfig};
pub use batchnorm::{batchnorm, BatchNormState, BatchStats, BnCache};
pub use conv::{conv1d, conv1d_backward, conv1d_range, ConvGrads, ConvSource, ConvSpec};
pub use dense::{dense, dense_backward, DenseGrads};
pub use error::{NumError, Result};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use loss::{softmax, softmax_xent, softmax_xent_labels, XentOutput};
pub use real::Real;
pub use tensor::Tensor;
