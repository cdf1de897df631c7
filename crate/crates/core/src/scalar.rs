//! Scalar abstraction shared by every numerical module.
//!
//! All physics code is written against [`Real`], which both `f32` and `f64`
//! satisfy. Complex amplitudes are `Complex<T>` over the same real type.

use nalgebra::{Complex, ComplexField, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// A real floating-point scalar usable throughout the crate.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over the real scalar `T`.
pub type C<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn abs<T: Real>(x: T) -> T {
    ComplexField::abs(x)
}

#[inline]
pub fn cplx<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// Modulus of a complex number.
#[inline]
pub fn modulus<T: Real>(z: C<T>) -> T {
    z.modulus()
}
