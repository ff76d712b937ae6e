//! Numeric abstractions shared by the generic parts of the crate.
//!
//! Floating-point code (weights, CAR densities, evaluation metrics) is
//! written against [`Scalar`]; betweenness accumulation only needs field
//! arithmetic and is written against [`Accumulator`], which admits exact
//! rationals as well as floats.

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, NumAssign, ToPrimitive};

/// Real floating-point scalar (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Field used to accumulate shortest-path counts and dependencies.
pub trait Accumulator: Num + Clone + FromPrimitive + ToPrimitive + PartialOrd + Debug {
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }
}

impl<T> Accumulator for T where T: Num + Clone + FromPrimitive + ToPrimitive + PartialOrd + Debug {}

/// Arbitrary-precision rational, used for exact centrality.
pub type Exact = Ratio<BigInt>;
