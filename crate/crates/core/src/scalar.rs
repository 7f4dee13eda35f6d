//! Scalar abstraction shared by every numerical kernel.
//!
//! Kernels are written once over a real field `T` and operate on
//! `Complex<T>` data. `f64` is the working precision used by the
//! experiment runner; `f32` is supported for memory-bound deployments.

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the estimation kernels.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + rustfft::FftNum {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + rustfft::FftNum {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).unwrap_or(f64::NAN)
}

/// `exp(j * phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

#[inline]
pub fn cplx<T: Real>(re: f64, im: f64) -> Complex<T> {
    Complex::new(lit(re), lit(im))
}

/// Casts a complex value between precisions.
#[inline]
pub fn cast_c<T: Real>(z: Complex<f64>) -> Complex<T> {
    Complex::new(lit(z.re), lit(z.im))
}

#[inline]
pub fn c_to_f64<T: Real>(z: Complex<T>) -> Complex<f64> {
    Complex::new(to_f64(z.re), to_f64(z.im))
}
