//! Lensless imaging toolkit: coded-mask optics simulation, classical
//! reconstruction (Wiener, gradient methods, FISTA, ADMM-TV, APGD), image
//! quality metrics, a small reverse-mode autodiff engine and the LensNet
//! encoder–decoder trained on top of it.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod dataio;
pub mod error;
pub mod lensnet;
pub mod metrics;
pub mod optics;
pub mod solvers;
pub mod tensor;
pub mod wiener;

pub use error::{Error, Result};
pub use tensor::{ComplexTensor, ImagePlane, Shape, Tensor};
