//! Floating-point abstraction shared by the probabilistic parts of the crate.
//!
//! Log-probabilities, expected counts, pruning thresholds and mixture weights
//! are all generic over [`Scalar`], so the same code runs in `f64` (the
//! default, see the aliases in the crate root) or in `f32` when memory matters
//! more than the last few digits.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable for log-space arithmetic.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Scalar")
    }

    #[inline]
    fn of_count(c: u64) -> Self {
        Self::from_u64(c).expect("count converts to Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance used when checking that probabilities sum to one.
    fn norm_tolerance() -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of(1e3))
    }

    /// `ln(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
    #[inline]
    fn log_add_exp(self, other: Self) -> Self {
        let (hi, lo) = if self >= other { (self, other) } else { (other, self) };
        if hi == Self::neg_infinity() {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Log-sum-exp over an iterator of log-values.
pub fn log_sum_exp<F: Scalar>(values: impl IntoIterator<Item = F>) -> F {
    let vals: Vec<F> = values.into_iter().collect();
    let max = vals.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() || max.is_infinite() {
        return max;
    }
    let sum: F = vals.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
