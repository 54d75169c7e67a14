//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar: `f32` or `f64`.
///
/// The associated constants carry the tolerances that depend on the
/// precision of the type (solver feasibility, pivot magnitudes, and so on).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Primal feasibility tolerance of the LP solver.
    const FEASIBILITY_TOL: Self;
    /// Reduced-cost tolerance of the LP solver.
    const OPTIMALITY_TOL: Self;
    /// Smallest pivot magnitude accepted in ratio tests and factorizations.
    const PIVOT_TOL: Self;
    /// Weights below this are snapped to zero when a solution is turned into a
    /// portfolio.
    const WEIGHT_ZERO_TOL: Self;

    /// Converts an `f64` literal. Panics only if the literal is not
    /// representable, which never happens for finite inputs.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in a float")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const FEASIBILITY_TOL: Self = 1e-4;
    const OPTIMALITY_TOL: Self = 1e-5;
    const PIVOT_TOL: Self = 1e-5;
    const WEIGHT_ZERO_TOL: Self = 1e-6;
}

impl Scalar for f64 {
    const FEASIBILITY_TOL: Self = 1e-7;
    const OPTIMALITY_TOL: Self = 1e-9;
    const PIVOT_TOL: Self = 1e-9;
    const WEIGHT_ZERO_TOL: Self = 1e-9;
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().copied().sum::<T>() / T::from_count(xs.len()))
}

/// Sample standard deviation (n - 1 denominator); `None` below two samples.
pub fn sample_std<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: T = xs.iter().map(|&x| (x - m) * (x - m)).sum();
    Some((ss / T::from_count(xs.len() - 1)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_std() {
        let xs = [0.02_f64, 0.0, 0.01, 0.03];
        assert!((mean(&xs).unwrap() - 0.015).abs() < 1e-15);
        let sd = sample_std(&xs).unwrap();
        assert!((sd - (5e-4_f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean::<f64>(&[]).is_none());
        assert!(sample_std(&[1.0_f32]).is_none());
    }
}
