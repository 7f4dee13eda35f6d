//! Compressed, decoupled, fused multidimensional parameter estimation for
//! angle/delay/Doppler sensing on a channel tensor, with reference baselines,
//! Cramér–Rao bounds, and a Monte-Carlo RMSE harness.
//!
//! Numerical kernels are generic over the real scalar (`f32` or `f64`);
//! physical scenario descriptors are always `f64`.

pub mod baselines;
pub mod compression;
pub mod crb;
pub mod error;
pub mod estimation;
pub mod evaluation;
pub mod fusion;
pub mod linalg;
pub mod scenario;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use nalgebra::Complex;
pub use scalar::Real;
pub use tensor::{CMatrix, CVector, Tensor};

pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type CMatrix64 = CMatrix<f64>;
