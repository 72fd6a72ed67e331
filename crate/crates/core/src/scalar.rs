use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used by the numeric core: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64`; used for constants and counts.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean, accumulated left to right as offsets from the first
/// value so that a constant list returns that constant exactly.
pub(crate) fn mean<T: Scalar>(values: &[T]) -> T {
    let Some(&shift) = values.first() else { return T::nan() };
    let offsets: T = values.iter().map(|&v| v - shift).sum();
    shift + offsets / T::of_usize(values.len())
}

/// Population standard deviation about `mean`, two-pass.
pub(crate) fn population_std<T: Scalar>(values: &[T], mean: T) -> T {
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (ss / T::of_usize(values.len())).sqrt()
}
