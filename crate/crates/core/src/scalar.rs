//! Scalar abstractions shared by the numeric modules.
//!
//! Everything that does floating-point work (tree leaf probabilities, Laplace
//! noise, the attack network, K-means, the deletion solver) is generic over
//! [`Real`]. Counting metrics are generic over [`Proportion`], which is also
//! implemented for exact rationals so identities between counts can be checked
//! without rounding.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, NumAssign, Signed, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; used for literals in generic code.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A ratio of two counts.
///
/// `f32`/`f64` give the usual rounded arithmetic; [`Ratio<i64>`] is exact.
pub trait Proportion:
    Clone + PartialEq + PartialOrd + Debug + Signed + ToPrimitive + Send + Sync + 'static
{
    /// `num / den`. Callers guarantee `den > 0`.
    fn from_counts(num: usize, den: usize) -> Self;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Proportion for f64 {
    fn from_counts(num: usize, den: usize) -> Self {
        num as f64 / den as f64
    }
}

impl Proportion for f32 {
    fn from_counts(num: usize, den: usize) -> Self {
        num as f32 / den as f32
    }
}

impl Proportion for Ratio<i64> {
    fn from_counts(num: usize, den: usize) -> Self {
        let num = i64::try_from(num).expect("count fits i64");
        let den = i64::try_from(den).expect("count fits i64");
        Ratio::new(num, den)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
