//! Floating-point abstraction shared by every numerical module.
//!
//! Algorithms are written against [`Real`] so the same code runs in `f32`
//! and `f64`. Configuration values and random draws are produced in `f64`
//! and converted at the boundary with [`Real::lit`].

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `1 - exp(-x)` evaluated without cancellation for small `x`.
    #[inline]
    fn one_minus_exp_neg(x: Self) -> Self {
        -(-x).exp_m1()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Rounds `value / step` to the nearest integer when the quotient lies
/// within `tol` (relative to one step) of it.
pub(crate) fn as_multiple<S: Real>(value: S, step: S, tol: f64) -> Option<usize> {
    if step <= S::zero() || value < -step * S::lit(tol) {
        return None;
    }
    let q = value / step;
    let n = q.round();
    if (q - n).abs() <= S::lit(tol) {
        n.to_usize()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_minus_exp_neg_small_argument() {
        let x = 1e-12_f64;
        let v = f64::one_minus_exp_neg(x);
        assert!((v - x).abs() < 1e-24);
    }

    #[test]
    fn multiple_detection() {
        assert_eq!(as_multiple(0.25_f64, 0.025, 1e-9), Some(10));
        assert_eq!(as_multiple(0.26_f64, 0.025, 1e-9), None);
        assert_eq!(as_multiple(0.0_f32, 0.1, 1e-4), Some(0));
        assert_eq!(as_multiple(-0.1_f64, 0.1, 1e-9), None);
    }
}
