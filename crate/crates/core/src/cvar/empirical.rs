//! Empirical value-at-risk and expected tail loss.

use crate::cvar::CvarError;
use crate::Scalar;

/// Rank `k = ceil((1 - alpha) S)` of the VaR sample, clamped to `[1, S]`.
///
/// Products that land within rounding distance of an integer are treated as
/// that integer, so `(1 - 0.95) * 20` counts as exactly 1.
pub fn tail_count<T: Scalar>(alpha: T, n_samples: usize) -> usize {
    let x = ((T::one() - alpha) * T::from_count(n_samples)).to_f64_lossy();
    let nearest = x.round();
    let slack = 1e-9 * (n_samples.max(1) as f64);
    let k = if (x - nearest).abs() <= slack { nearest } else { x.ceil() };
    (k.max(1.0) as usize).min(n_samples.max(1))
}

fn check<T: Scalar>(samples: &[T], alpha: T) -> Result<(), CvarError> {
    if samples.is_empty() {
        return Err(CvarError::EmptySamples);
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(CvarError::InvalidAlpha(alpha.to_f64_lossy()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(CvarError::NonFinite);
    }
    Ok(())
}

fn sorted<T: Scalar>(samples: &[T]) -> Vec<T> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    v
}

/// `VaR_alpha = -inf{x : F(x) >= 1 - alpha}` under the empirical CDF, i.e. the
/// negated `ceil((1 - alpha) S)`-th smallest sample.
pub fn empirical_var<T: Scalar>(samples: &[T], alpha: T) -> Result<T, CvarError> {
    check(samples, alpha)?;
    let s = sorted(samples);
    Ok(-s[tail_count(alpha, s.len()) - 1])
}

/// `ETL_alpha = -E[r | r <= -VaR_alpha]`: the negated mean of every sample at
/// or below the VaR threshold (ties at the threshold included).
pub fn empirical_etl<T: Scalar>(samples: &[T], alpha: T) -> Result<T, CvarError> {
    check(samples, alpha)?;
    let s = sorted(samples);
    let threshold = s[tail_count(alpha, s.len()) - 1];
    let tail: Vec<T> = s.iter().copied().take_while(|&x| x <= threshold).collect();
    let sum: T = tail.iter().copied().sum();
    Ok(-sum / T::from_count(tail.len()))
}

/// Negated mean of the `ceil((1 - alpha) S)` smallest samples, without tie
/// expansion. This is the quantity the scenario program minimizes under
/// [`TailConvention::EmpiricalRank`](crate::cvar::TailConvention).
pub fn worst_k_mean<T: Scalar>(samples: &[T], alpha: T) -> Result<T, CvarError> {
    check(samples, alpha)?;
    let s = sorted(samples);
    let k = tail_count(alpha, s.len());
    let sum: T = s[..k].iter().copied().sum();
    Ok(-sum / T::from_count(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn var_examples() {
        assert_eq!(empirical_var(&[-3.0, -1.0, 0.0, 1.0, 2.0], 0.8).unwrap(), 3.0);
        assert_eq!(empirical_var(&[0.7; 6], 0.95).unwrap(), -0.7);
        assert_eq!(empirical_var(&[-1.0, 1.0], 0.5).unwrap(), 1.0);
    }

    #[test]
    fn etl_examples() {
        assert_eq!(empirical_etl(&[-3.0, -1.0, 0.0, 1.0, 2.0], 0.8).unwrap(), 3.0);
        assert_eq!(empirical_etl(&[0.25; 4], 0.9).unwrap(), -0.25);
        assert_eq!(empirical_etl(&[-4.0, -2.0, 0.0, 2.0], 0.5).unwrap(), 3.0);
    }

    #[test]
    fn thin_tail_keeps_var_sample() {
        // (1 - 0.99) * 10 < 1: the tail is the single worst sample.
        let xs = [0.5, -2.0, 1.0, 0.1, 0.0, 0.3, -0.4, 0.2, 0.9, 0.6];
        assert_eq!(empirical_etl(&xs, 0.99).unwrap(), 2.0);
        assert_eq!(empirical_var(&xs, 0.99).unwrap(), 2.0);
    }

    #[test]
    fn ties_at_threshold_are_included() {
        let xs = [-2.0, -1.0, -1.0, 3.0];
        // k = 2, threshold -1, tail {-2, -1, -1}
        assert!((empirical_etl(&xs, 0.5f64).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(worst_k_mean(&xs, 0.5).unwrap(), 1.5);
    }

    #[test]
    fn tail_count_rounding() {
        assert_eq!(tail_count(0.95, 20), 1);
        assert_eq!(tail_count(0.95, 21), 2);
        assert_eq!(tail_count(0.8, 5), 1);
        assert_eq!(tail_count(0.99, 1008), 11);
        assert_eq!(tail_count(0.95, 1008), 51);
        assert_eq!(tail_count(0.999, 3), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(empirical_var::<f64>(&[], 0.9), Err(CvarError::EmptySamples)));
        assert!(matches!(empirical_etl(&[1.0], 1.0), Err(CvarError::InvalidAlpha(_))));
        assert!(matches!(empirical_etl(&[f64::NAN], 0.5), Err(CvarError::NonFinite)));
    }
}
