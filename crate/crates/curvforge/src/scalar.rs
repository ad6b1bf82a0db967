//! Scalar abstraction shared by every numeric routine.
//!
//! Geometry code is written once against [`Scalar`] and instantiated with
//! plain `f64` for values, with [`crate::jet::Jet1`] / [`crate::jet::Jet2`]
//! for exact first and second derivatives, and with [`crate::jet::Dual`] for
//! first-order perturbation bookkeeping of quantities far below `f64`
//! resolution relative to their base.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use std::fmt::Debug;
use std::iter::Sum;

/// Real-like number usable by the generic geometry kernels.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssignOps + Sum + Debug + Send + Sync + 'static
{
    /// Apply a smooth scalar function given its value and first three
    /// derivatives at an `f64` argument.
    fn lift(self, f: &dyn Fn(f64) -> [f64; 4]) -> Self;

    /// The underlying `f64` value used for branching.
    fn primal(self) -> f64;

    /// Embed a constant.
    fn cst(v: f64) -> Self;

    /// Reclassify a quantity as a small perturbation (meaningful for
    /// [`crate::jet::Dual`], identity elsewhere).
    fn mark_small(self) -> Self {
        self
    }
}

impl Scalar for f64 {
    #[inline]
    fn lift(self, f: &dyn Fn(f64) -> [f64; 4]) -> Self {
        f(self)[0]
    }
    #[inline]
    fn primal(self) -> f64 {
        self
    }
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
}

/// Shift a derivative stack by `k`, so entry 0 becomes the `k`-th derivative.
#[inline]
pub(crate) fn shift(a: [f64; 4], k: usize) -> [f64; 4] {
    let mut out = [f64::NAN; 4];
    out[..(4 - k)].copy_from_slice(&a[k..]);
    out
}

/// Shorthand for embedding a constant.
#[inline]
pub fn c<T: Scalar>(v: f64) -> T {
    T::cst(v)
}
