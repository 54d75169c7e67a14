//! Brinson-style attribution of a portfolio's expected excess return over a
//! benchmark: allocation (AA), selection (SE), interaction (I) and combined
//! selection (SE + I), per class and in total.
//!
//! All quantities are per-day log-return units; nothing is annualized.

use serde::Serialize;
use thiserror::Error;

use crate::market_data::ClassPartition;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributionError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("negative weight {value} for asset {asset}")]
    NegativeWeight { asset: usize, value: f64 },
    #[error("weights sum to {0}, not 1")]
    NotFullyInvested(f64),
    #[error("non-finite value")]
    NonFinite,
    #[error("empty class position: class {class} has zero weight")]
    EmptyClassPosition { class: usize },
    #[error("benchmark weight of class {class} is not positive")]
    NonPositiveBenchmarkClass { class: usize },
    #[error("degenerate class excess: benchmark class {class} return equals the benchmark return")]
    DegenerateClassExcess { class: usize },
    #[error("class index {class} out of range (M = {classes})")]
    ClassOutOfRange { class: usize, classes: usize },
}

fn sum_tolerance<T: Scalar>(n: usize) -> T {
    T::lit(1e-9).max(T::epsilon() * T::from_count(16 * n.max(1)))
}

/// Long-only, fully invested asset weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector<T> {
    weights: Vec<T>,
}

impl<T: Scalar> WeightVector<T> {
    pub fn new(weights: Vec<T>) -> Result<Self, AttributionError> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(AttributionError::NonFinite);
        }
        if let Some((asset, &w)) = weights.iter().enumerate().find(|(_, &w)| w < T::zero()) {
            return Err(AttributionError::NegativeWeight { asset, value: w.to_f64_lossy() });
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > sum_tolerance::<T>(weights.len()) {
            return Err(AttributionError::NotFullyInvested(total.to_f64_lossy()));
        }
        Ok(Self { weights })
    }

    /// `1/N` on every asset.
    pub fn uniform(n: usize) -> Self {
        let w = T::one() / T::from_count(n);
        Self { weights: vec![w; n] }
    }

    /// Cleans raw solver output: values within `tol` below zero are clamped,
    /// values under [`Scalar::WEIGHT_ZERO_TOL`] snap to zero, and the rest is
    /// rescaled to sum to one.
    pub fn from_solver(values: &[T], tol: T) -> Result<Self, AttributionError> {
        let mut w = Vec::with_capacity(values.len());
        for (asset, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(AttributionError::NonFinite);
            }
            if v < -tol {
                return Err(AttributionError::NegativeWeight { asset, value: v.to_f64_lossy() });
            }
            w.push(if v < T::WEIGHT_ZERO_TOL { T::zero() } else { v });
        }
        let total: T = w.iter().copied().sum();
        if (total - T::one()).abs() > tol * T::from_count(values.len().max(1)) {
            return Err(AttributionError::NotFullyInvested(total.to_f64_lossy()));
        }
        if total != T::one() {
            for x in &mut w {
                *x = *x / total;
            }
        }
        Ok(Self { weights: w })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `w_i = sum_j w_ij` for class `class`.
    pub fn class_weight(&self, partition: &ClassPartition, class: usize) -> T {
        partition.members(class).iter().map(|&a| self.weights[a]).sum()
    }

    pub fn class_weights(&self, partition: &ClassPartition) -> Vec<T> {
        (0..partition.n_classes()).map(|i| self.class_weight(partition, i)).collect()
    }
}

/// Expected per-day log-return of each asset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedReturns<T> {
    mu: Vec<T>,
}

impl<T: Scalar> ExpectedReturns<T> {
    pub fn new(mu: Vec<T>) -> Result<Self, AttributionError> {
        if mu.iter().any(|x| !x.is_finite()) {
            return Err(AttributionError::NonFinite);
        }
        Ok(Self { mu })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

fn check_dims<T: Scalar>(
    weights: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
) -> Result<(), AttributionError> {
    let n = partition.n_assets();
    for len in [weights.len(), mu.len()] {
        if len != n {
            return Err(AttributionError::DimensionMismatch { expected: n, actual: len });
        }
    }
    Ok(())
}

fn weighted_sum<T: Scalar>(weights: &[T], mu: &[T], assets: &[usize]) -> T {
    assets.iter().map(|&a| weights[a] * mu[a]).sum()
}

/// `R_i = sum_j (w_ij / w_i) mu_ij`: the class viewed as a fully invested
/// portfolio by itself.
pub fn class_return<T: Scalar>(
    weights: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
    class: usize,
) -> Result<T, AttributionError> {
    check_dims(weights, partition, mu)?;
    if class >= partition.n_classes() {
        return Err(AttributionError::ClassOutOfRange { class, classes: partition.n_classes() });
    }
    let members = partition.members(class);
    let wi = weights.class_weight(partition, class);
    if wi <= T::zero() {
        return Err(AttributionError::EmptyClassPosition { class });
    }
    Ok(weighted_sum(weights.as_slice(), mu.as_slice(), members) / wi)
}

/// `R = sum_ij w_ij mu_ij`.
pub fn portfolio_return<T: Scalar>(weights: &WeightVector<T>, mu: &ExpectedReturns<T>) -> T {
    weights.as_slice().iter().zip(mu.as_slice()).map(|(&w, &m)| w * m).sum()
}

/// Leading-order error of aggregating log-returns linearly:
/// `(sum w mu^2 - (sum w mu)^2) / 2`, half the weighted variance of `mu`.
pub fn log_return_decomposition_error<T: Scalar>(weights: &WeightVector<T>, mu: &ExpectedReturns<T>) -> T {
    let w = weights.as_slice();
    let m = mu.as_slice();
    let mean: T = w.iter().zip(m).map(|(&a, &b)| a * b).sum();
    // Centered form keeps the result non-negative under rounding.
    let var: T = w.iter().zip(m).map(|(&a, &b)| a * (b - mean) * (b - mean)).sum();
    var / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassAttribution<T> {
    pub aa: T,
    pub se: T,
    pub interaction: T,
    /// `SE_i + I_i`.
    pub se_bar: T,
    pub return_p: T,
    pub return_b: T,
    pub weight_p: T,
    pub weight_b: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttributionTotals<T> {
    pub aa: T,
    pub se: T,
    pub interaction: T,
    pub se_bar: T,
    pub return_p: T,
    pub return_b: T,
    /// `R^(p) - R^(b)`.
    pub excess: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionReport<T> {
    pub classes: Vec<ClassAttribution<T>>,
    pub totals: AttributionTotals<T>,
}

/// Attributes the portfolio's expected excess return over the benchmark.
///
/// A class the portfolio does not hold gets `R_i^(p) = 0`, hence
/// `SE_i = -w_i^(b) R_i^(b)` regardless of the portfolio.
pub fn attribute<T: Scalar>(
    portfolio: &WeightVector<T>,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
) -> Result<AttributionReport<T>, AttributionError> {
    check_dims(portfolio, partition, mu)?;
    check_dims(benchmark, partition, mu)?;
    let wp = portfolio.as_slice();
    let wb = benchmark.as_slice();
    let m = mu.as_slice();
    let total_b = portfolio_return(benchmark, mu);
    let total_p = portfolio_return(portfolio, mu);

    let mut classes = Vec::with_capacity(partition.n_classes());
    for i in 0..partition.n_classes() {
        let members = partition.members(i);
        let weight_b = benchmark.class_weight(partition, i);
        if weight_b <= T::zero() {
            return Err(AttributionError::NonPositiveBenchmarkClass { class: i });
        }
        let weight_p = portfolio.class_weight(partition, i);
        let return_b = weighted_sum(wb, m, members) / weight_b;
        let return_p = if weight_p > T::zero() {
            weighted_sum(wp, m, members) / weight_p
        } else {
            T::zero()
        };
        let dw = weight_p - weight_b;
        let se = weight_b * (return_p - return_b);
        let interaction = dw * (return_p - return_b);
        classes.push(ClassAttribution {
            aa: dw * (return_b - total_b),
            se,
            interaction,
            se_bar: se + interaction,
            return_p,
            return_b,
            weight_p,
            weight_b,
        });
    }
    let sum = |f: fn(&ClassAttribution<T>) -> T| classes.iter().map(f).sum::<T>();
    let totals = AttributionTotals {
        aa: sum(|c| c.aa),
        se: sum(|c| c.se),
        interaction: sum(|c| c.interaction),
        se_bar: sum(|c| c.se_bar),
        return_p: total_p,
        return_b: total_b,
        excess: total_p - total_b,
    };
    Ok(AttributionReport { classes, totals })
}

/// Alternative expressions of the interaction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionForm {
    /// `AA_i SE_i / (w_i^(b) (R_i^(b) - R^(b)))`.
    AllocationTimesSelection,
    /// `(w_i^(p) / w_i^(b) - 1) SE_i`.
    OverweightTimesSelection,
}

/// Recomputes `I_i` from a report through one of the alternative forms.
pub fn interaction_alt_form<T: Scalar>(
    report: &AttributionReport<T>,
    class: usize,
    form: InteractionForm,
) -> Result<T, AttributionError> {
    let c = report.classes.get(class).ok_or(AttributionError::ClassOutOfRange {
        class,
        classes: report.classes.len(),
    })?;
    if c.weight_b <= T::zero() {
        return Err(AttributionError::NonPositiveBenchmarkClass { class });
    }
    match form {
        InteractionForm::AllocationTimesSelection => {
            let denom = c.weight_b * (c.return_b - report.totals.return_b);
            if denom.abs() <= T::lit(1e-12).max(T::min_positive_value()) {
                return Err(AttributionError::DegenerateClassExcess { class });
            }
            Ok(c.aa * c.se / denom)
        }
        InteractionForm::OverweightTimesSelection => Ok((c.weight_p / c.weight_b - T::one()) * c.se),
    }
}

impl<T: Scalar> AttributionReport<T> {
    /// Column names of [`Self::csv_fields`] for `m` classes.
    pub fn csv_header(m: usize) -> Vec<String> {
        let mut h = Vec::with_capacity(8 * m + 7);
        for i in 1..=m {
            for name in ["aa", "se", "i", "sebar", "rp", "rb", "wp", "wb"] {
                h.push(format!("{name}_{i}"));
            }
        }
        for name in ["aa", "se", "i", "sebar", "rp", "rb", "s"] {
            h.push(name.to_string());
        }
        h
    }

    pub fn csv_fields(&self) -> Vec<String> {
        let mut f = Vec::with_capacity(8 * self.classes.len() + 7);
        for c in &self.classes {
            for v in [c.aa, c.se, c.interaction, c.se_bar, c.return_p, c.return_b, c.weight_p, c.weight_b] {
                f.push(v.to_string());
            }
        }
        let t = &self.totals;
        for v in [t.aa, t.se, t.interaction, t.se_bar, t.return_p, t.return_b, t.excess] {
            f.push(v.to_string());
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singletons(n: usize) -> ClassPartition {
        let tickers: Vec<String> = (0..n).map(|i| format!("A{i}")).collect();
        let lists: Vec<Vec<String>> = tickers.iter().map(|t| vec![t.clone()]).collect();
        ClassPartition::from_class_lists(&tickers, &lists).unwrap()
    }

    #[test]
    fn class_return_examples() {
        let part = ClassPartition::from_class_lists(
            &["a".into(), "b".into(), "c".into()],
            &[vec!["a".into(), "b".into()], vec!["c".into()]],
        )
        .unwrap();
        let w = WeightVector::<f64>::new(vec![0.2, 0.2, 0.6]).unwrap();
        let mu = ExpectedReturns::<f64>::new(vec![0.01, 0.03, 0.01]).unwrap();
        assert!((class_return(&w, &part, &mu, 0).unwrap() - 0.02).abs() < 1e-15);
        assert!((class_return(&w, &part, &mu, 1).unwrap() - 0.01).abs() < 1e-15);
        let empty = WeightVector::<f64>::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            class_return(&empty, &part, &mu, 0),
            Err(AttributionError::EmptyClassPosition { class: 0 })
        );
    }

    #[test]
    fn portfolio_return_examples() {
        let mu = ExpectedReturns::<f64>::new(vec![0.003; 4]).unwrap();
        assert!((portfolio_return(&WeightVector::<f64>::uniform(4), &mu) - 0.003).abs() < 1e-15);
        let mu = ExpectedReturns::<f64>::new(vec![0.05, -0.2]).unwrap();
        assert_eq!(portfolio_return(&WeightVector::<f64>::new(vec![1.0, 0.0]).unwrap(), &mu), 0.05);
        let mu = ExpectedReturns::<f64>::new(vec![0.04, 0.0]).unwrap();
        assert!((portfolio_return(&WeightVector::<f64>::new(vec![0.25, 0.75]).unwrap(), &mu) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn two_single_asset_classes() {
        let part = singletons(2);
        let p = WeightVector::<f64>::new(vec![0.6, 0.4]).unwrap();
        let b = WeightVector::<f64>::new(vec![0.5, 0.5]).unwrap();
        let mu = ExpectedReturns::<f64>::new(vec![0.02, -0.01]).unwrap();
        let r = attribute(&p, &b, &part, &mu).unwrap();
        assert!((r.totals.return_b - 0.005).abs() < 1e-15);
        assert!((r.classes[0].aa - 0.0015).abs() < 1e-15);
        assert!((r.classes[1].aa - 0.0015).abs() < 1e-15);
        assert!(r.totals.se.abs() < 1e-15 && r.totals.interaction.abs() < 1e-15);
        assert!((r.totals.excess - 0.003).abs() < 1e-15);
        assert!((r.totals.aa - 0.003).abs() < 1e-15);
        for i in 0..2 {
            let eq7 = interaction_alt_form(&r, i, InteractionForm::OverweightTimesSelection).unwrap();
            let eq6 = interaction_alt_form(&r, i, InteractionForm::AllocationTimesSelection).unwrap();
            assert!(eq7.abs() < 1e-15 && eq6.abs() < 1e-15);
        }
    }

    #[test]
    fn identical_portfolio_attributes_nothing() {
        let part = singletons(3);
        let b = WeightVector::<f64>::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mu = ExpectedReturns::<f64>::new(vec![0.01, -0.02, 0.005]).unwrap();
        let r = attribute(&b, &b, &part, &mu).unwrap();
        for c in &r.classes {
            assert_eq!((c.aa, c.se, c.interaction), (0.0, 0.0, 0.0));
            let eq7 = interaction_alt_form(&r, 0, InteractionForm::OverweightTimesSelection).unwrap();
            assert_eq!(eq7, 0.0);
        }
        assert_eq!(r.totals.excess, 0.0);
    }

    #[test]
    fn empty_class_convention() {
        let part = ClassPartition::from_class_lists(
            &["a".into(), "b".into(), "c".into()],
            &[vec!["a".into(), "b".into()], vec!["c".into()]],
        )
        .unwrap();
        let p = WeightVector::<f64>::new(vec![0.0, 0.0, 1.0]).unwrap();
        let b = WeightVector::<f64>::uniform(3);
        let mu = ExpectedReturns::<f64>::new(vec![0.01, 0.02, 0.0]).unwrap();
        let r = attribute(&p, &b, &part, &mu).unwrap();
        let c = r.classes[0];
        assert_eq!(c.return_p, 0.0);
        assert!((c.se + c.weight_b * c.return_b).abs() < 1e-15);
        assert!(c.se_bar.abs() < 1e-15);
        let s = r.totals.aa + r.totals.se + r.totals.interaction;
        assert!((s - r.totals.excess).abs() < 1e-15);
    }

    #[test]
    fn degenerate_eq6_denominator() {
        // Class return equals the benchmark return while SE is non-zero.
        let part = ClassPartition::from_class_lists(
            &["a".into(), "b".into(), "c".into(), "d".into()],
            &[vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]],
        )
        .unwrap();
        let b = WeightVector::<f64>::uniform(4);
        let p = WeightVector::<f64>::new(vec![0.5, 0.1, 0.2, 0.2]).unwrap();
        let mu = ExpectedReturns::<f64>::new(vec![0.02, 0.0, 0.03, -0.01]).unwrap();
        let r = attribute(&p, &b, &part, &mu).unwrap();
        assert!(r.classes[0].se.abs() > 1e-6);
        assert_eq!(
            interaction_alt_form(&r, 0, InteractionForm::AllocationTimesSelection),
            Err(AttributionError::DegenerateClassExcess { class: 0 })
        );
        assert!(r.classes[0].interaction.is_finite());
    }

    #[test]
    fn decomposition_error_examples() {
        let w = WeightVector::<f64>::new(vec![0.5, 0.5]).unwrap();
        let mu = ExpectedReturns::<f64>::new(vec![0.1, -0.1]).unwrap();
        assert!((log_return_decomposition_error(&w, &mu) - 0.005).abs() < 1e-15);
        let mu = ExpectedReturns::<f64>::new(vec![0.07, 0.07]).unwrap();
        assert_eq!(log_return_decomposition_error(&w, &mu), 0.0);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(matches!(WeightVector::<f64>::new(vec![0.5, 0.6]), Err(AttributionError::NotFullyInvested(_))));
        assert!(matches!(WeightVector::<f64>::new(vec![1.5, -0.5]), Err(AttributionError::NegativeWeight { .. })));
        assert!(WeightVector::<f32>::new(vec![1.0_f32]).is_ok());
        let w = WeightVector::from_solver(&[0.5, -1e-12, 0.5 + 2e-12, 1e-13], 1e-7).unwrap();
        assert_eq!(w.as_slice()[1], 0.0);
        assert_eq!(w.as_slice()[3], 0.0);
        assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let part = singletons(2);
        let p = WeightVector::<f64>::uniform(3);
        let mu = ExpectedReturns::<f64>::new(vec![0.0; 2]).unwrap();
        assert!(matches!(
            attribute(&p, &WeightVector::<f64>::uniform(2), &part, &mu),
            Err(AttributionError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn csv_row_width_matches_header() {
        let part = singletons(3);
        let b = WeightVector::<f64>::uniform(3);
        let mu = ExpectedReturns::<f64>::new(vec![0.0; 3]).unwrap();
        let r = attribute(&b, &b, &part, &mu).unwrap();
        assert_eq!(AttributionReport::<f64>::csv_header(3).len(), r.csv_fields().len());
    }
}
