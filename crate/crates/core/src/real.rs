//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
///
/// Tolerances quoted throughout the docs and tests assume `f64`; `f32` works
/// for the same code paths at correspondingly looser accuracy.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Conversion from a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Element-wise helpers on plain slices.
pub mod vec {
    use super::Real;

    pub fn zeros<T: Real>(d: usize) -> Vec<T> {
        vec![T::zero(); d]
    }

    pub fn filled<T: Real>(d: usize, v: T) -> Vec<T> {
        vec![v; d]
    }

    pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x + y).collect()
    }

    pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x - y).collect()
    }

    pub fn mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
        a.iter().zip(b).map(|(&x, &y)| x * y).collect()
    }

    pub fn scale<T: Real>(a: &[T], k: T) -> Vec<T> {
        a.iter().map(|&x| x * k).collect()
    }

    /// `y += k * x`
    pub fn axpy<T: Real>(y: &mut [T], k: T, x: &[T]) {
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = *yi + k * xi;
        }
    }

    pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
        a.iter().zip(b).map(|(&x, &y)| x * y).sum()
    }

    pub fn norm2<T: Real>(a: &[T]) -> T {
        dot(a, a).sqrt()
    }

    pub fn norm_inf<T: Real>(a: &[T]) -> T {
        a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
        a.iter()
            .zip(b)
            .fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
    }
}
