//! Maximum drawdown, Sharpe and Rachev ratios, over a full period or trailing
//! windows. Everything is in per-day units.

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::cvar::{empirical_etl, CvarError};
use crate::scalar::{mean, sample_std};
use crate::Scalar;

/// Tail levels used for the Rachev ratio unless stated otherwise.
pub const RACHEV_ALPHA: f64 = 0.95;
pub const RACHEV_BETA: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("empty series")]
    Empty,
    #[error("price {value} at position {index} is not positive")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate Sharpe: excess returns have zero variance")]
    DegenerateSharpe,
    #[error("need at least 2 returns, got {0}")]
    TooShort(usize),
    #[error("degenerate lower tail: loss-side tail measure is not positive")]
    DegenerateLowerTail,
    #[error("window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error(transparent)]
    Cvar(#[from] CvarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrawdownForm {
    /// Decline as a fraction of the running peak.
    #[default]
    Relative,
    /// Decline in price units.
    Absolute,
}

/// Largest peak-to-trough decline as a fraction of the peak.
pub fn max_drawdown<T: Scalar>(prices: &[T]) -> Result<T, RiskError> {
    max_drawdown_with(prices, DrawdownForm::Relative)
}

pub fn max_drawdown_with<T: Scalar>(prices: &[T], form: DrawdownForm) -> Result<T, RiskError> {
    let first = *prices.first().ok_or(RiskError::Empty)?;
    let mut peak = first;
    let mut worst = T::zero();
    for (index, &p) in prices.iter().enumerate() {
        if !(p > T::zero()) || !p.is_finite() {
            return Err(RiskError::NonPositivePrice { index, value: p.to_f64_lossy() });
        }
        peak = peak.max(p);
        let dd = match form {
            DrawdownForm::Relative => (peak - p) / peak,
            DrawdownForm::Absolute => peak - p,
        };
        worst = worst.max(dd);
    }
    Ok(worst)
}

fn excess<T: Scalar>(returns: &[T], risk_free: &[T]) -> Result<Vec<T>, RiskError> {
    if returns.len() != risk_free.len() {
        return Err(RiskError::LengthMismatch(returns.len(), risk_free.len()));
    }
    Ok(returns.iter().zip(risk_free).map(|(&r, &f)| r - f).collect())
}

/// `mean(R - r_f) / std(R - r_f)` with the sample (n - 1) deviation.
pub fn sharpe_ratio<T: Scalar>(returns: &[T], risk_free: &[T]) -> Result<T, RiskError> {
    let x = excess(returns, risk_free)?;
    if x.len() < 2 {
        return Err(RiskError::TooShort(x.len()));
    }
    let m = mean(&x).expect("non-empty");
    let sd = sample_std(&x).expect("two or more samples");
    let scale = x.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    if !(sd > T::epsilon() * T::lit(16.0) * scale) {
        return Err(RiskError::DegenerateSharpe);
    }
    Ok(m / sd)
}

/// `ETL_alpha(r_f - R) / ETL_beta(R - r_f)`: expected upper-tail gain over
/// expected lower-tail loss of the excess return.
pub fn rachev_ratio<T: Scalar>(returns: &[T], risk_free: &[T], alpha: T, beta: T) -> Result<T, RiskError> {
    let x = excess(returns, risk_free)?;
    if x.is_empty() {
        return Err(RiskError::Empty);
    }
    let neg: Vec<T> = x.iter().map(|&v| -v).collect();
    let reward = empirical_etl(&neg, alpha)?;
    let risk = empirical_etl(&x, beta)?;
    if !(risk > T::zero()) {
        return Err(RiskError::DegenerateLowerTail);
    }
    Ok(reward / risk)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSummary<T> {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub mdd: T,
    /// `None` when the excess returns have zero variance.
    pub sharpe: Option<T>,
    /// `None` when the lower tail is degenerate.
    pub rachev: Option<T>,
}

/// Full-period measures of one series. `prices[t]` is the price after
/// `returns[t]`; `dates` labels both.
pub fn risk_summary<T: Scalar>(
    dates: &[NaiveDate],
    prices: &[T],
    returns: &[T],
    risk_free: &[T],
    alpha: T,
    beta: T,
) -> Result<RiskSummary<T>, RiskError> {
    if dates.len() != prices.len() || prices.len() != returns.len() {
        return Err(RiskError::LengthMismatch(prices.len(), returns.len()));
    }
    let (Some(&start), Some(&end)) = (dates.first(), dates.last()) else {
        return Err(RiskError::Empty);
    };
    let degenerate = |e: &RiskError| {
        matches!(e, RiskError::DegenerateSharpe | RiskError::DegenerateLowerTail | RiskError::TooShort(_))
    };
    let sharpe = match sharpe_ratio(returns, risk_free) {
        Ok(v) => Some(v),
        Err(e) if degenerate(&e) => None,
        Err(e) => return Err(e),
    };
    let rachev = match rachev_ratio(returns, risk_free, alpha, beta) {
        Ok(v) => Some(v),
        Err(e) if degenerate(&e) => None,
        Err(e) => return Err(e),
    };
    Ok(RiskSummary { start, end, mdd: max_drawdown(prices)?, sharpe, rachev })
}

/// One summary per trailing window `[t - window + 1, t]`, for every `t` from
/// `window - 1` to the end: `len - window + 1` summaries.
pub fn moving_window_metrics<T: Scalar>(
    dates: &[NaiveDate],
    prices: &[T],
    returns: &[T],
    risk_free: &[T],
    window: usize,
    alpha: T,
    beta: T,
) -> Result<Vec<RiskSummary<T>>, RiskError> {
    let len = returns.len();
    if window == 0 || window > len {
        return Err(RiskError::WindowTooLarge { window, len });
    }
    if risk_free.len() != len {
        return Err(RiskError::LengthMismatch(len, risk_free.len()));
    }
    (window - 1..len)
        .map(|end| {
            let s = end + 1 - window;
            risk_summary(
                &dates[s..=end],
                &prices[s..=end],
                &returns[s..=end],
                &risk_free[s..=end],
                alpha,
                beta,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::business_days;

    #[test]
    fn drawdown_examples() {
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let mdd = max_drawdown(&[1.0f64, 1.2, 0.9, 1.1, 0.8]).unwrap();
        assert!((mdd - 1.0 / 3.0).abs() < 1e-15);
        assert!((max_drawdown_with(&[1.0f64, 1.2, 0.9, 1.1, 0.8], DrawdownForm::Absolute).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(max_drawdown::<f64>(&[]), Err(RiskError::Empty));
        assert!(matches!(max_drawdown(&[1.0, 0.0]), Err(RiskError::NonPositivePrice { index: 1, .. })));
    }

    #[test]
    fn sharpe_examples() {
        let rf = [0.0; 4];
        let s = sharpe_ratio(&[0.02, 0.0, 0.01, 0.03], &rf).unwrap();
        // mean 0.015, sample sd sqrt(0.0005/3) = 0.0129099...
        assert!((s - 0.015 / (0.0005f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s - 1.1619).abs() < 1e-4);
        assert_eq!(sharpe_ratio(&[0.1, 0.1, 0.1], &[0.0; 3]), Err(RiskError::DegenerateSharpe));
        assert_eq!(sharpe_ratio(&[1.0, -1.0, 1.0, -1.0], &rf).unwrap(), 0.0);
        assert_eq!(sharpe_ratio(&[0.1, 0.2], &[0.0]), Err(RiskError::LengthMismatch(2, 1)));
    }

    #[test]
    fn rachev_examples() {
        let z = [0.0; 5];
        let a = rachev_ratio(&[-2.0, -1.0, 1.0, 2.0, 4.0], &z, 0.8, 0.8).unwrap();
        let b = rachev_ratio(&[-4.0, -2.0, 1.0, 1.0, 2.0], &z, 0.8, 0.8).unwrap();
        assert_eq!((a, b), (2.0, 0.5));
        let sym = [-0.03, -0.01, 0.0, 0.01, 0.03, 0.02, -0.02];
        assert!((rachev_ratio::<f64>(&sym, &[0.0; 7], 0.9, 0.9).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rachev_ratio(&[0.1, 0.2], &[0.0; 2], 0.5, 0.5), Err(RiskError::DegenerateLowerTail));
    }

    #[test]
    fn moving_window_counts_and_collapse() {
        let n = 40;
        let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), n);
        let returns: Vec<f64> = (0..n).map(|t| ((t * 7919) % 13) as f64 * 0.002 - 0.012).collect();
        let mut acc = 0.0;
        let prices: Vec<f64> = returns.iter().map(|r| {
            acc += r;
            f64::exp(acc)
        }).collect();
        let rf = vec![0.0001; n];
        let all = moving_window_metrics(&dates, &prices, &returns, &rf, 15, 0.95, 0.95).unwrap();
        assert_eq!(all.len(), n - 15 + 1);
        let full = moving_window_metrics(&dates, &prices, &returns, &rf, n, 0.95, 0.95).unwrap();
        assert_eq!(full, vec![risk_summary(&dates, &prices, &returns, &rf, 0.95, 0.95).unwrap()]);
        assert!(moving_window_metrics(&dates, &prices, &returns, &rf, n + 1, 0.95, 0.95).is_err());

        let flat = vec![1.0; n];
        let zero = vec![0.0; n];
        for s in moving_window_metrics(&dates, &flat, &zero, &zero, 10, 0.95, 0.95).unwrap() {
            assert_eq!(s.mdd, 0.0);
            assert_eq!((s.sharpe, s.rachev), (None, None));
        }
    }
}
