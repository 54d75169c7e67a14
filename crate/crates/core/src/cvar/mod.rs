//! Empirical VaR / ETL and the scenario linear program that minimizes ETL
//! over long-only, fully invested weights.

pub mod empirical;
pub mod lp;
pub mod simplex;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::Scalar;

pub use empirical::{empirical_etl, empirical_var, tail_count, worst_k_mean};
pub use lp::{
    build_etl_lp, shift_etl_basis, solve_lp, solve_lp_with, EtlLayout, LinearProgram, SolveOutcome, SolveStatus,
    TailConvention, WeightConstraint,
};
pub use simplex::{Basis, BasisStatus, SimplexOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvarError {
    #[error("empty sample set")]
    EmptySamples,
    #[error("scenario matrix has no scenarios or no assets")]
    EmptyScenarios,
    #[error("quantile level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("non-finite sample")]
    NonFinite,
    #[error("dimension mismatch: expected {expected} assets, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// `S x N` per-day log-returns, one equally likely scenario per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMatrix<T> {
    returns: Matrix<T>,
}

impl<T: Scalar> ScenarioMatrix<T> {
    pub fn new(returns: Matrix<T>) -> Result<Self, CvarError> {
        if returns.rows() == 0 || returns.cols() == 0 {
            return Err(CvarError::EmptyScenarios);
        }
        if returns.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(CvarError::NonFinite);
        }
        Ok(Self { returns })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, CvarError> {
        let m = Matrix::from_rows(rows).ok_or(CvarError::DimensionMismatch {
            expected: rows.first().map_or(0, Vec::len),
            actual: rows.iter().map(Vec::len).find(|&l| l != rows[0].len()).unwrap_or(0),
        })?;
        Self::new(m)
    }

    pub fn n_scenarios(&self) -> usize {
        self.returns.rows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.cols()
    }

    pub fn row(&self, s: usize) -> &[T] {
        self.returns.row(s)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.returns
    }

    /// Scenario returns of the portfolio `weights`.
    pub fn portfolio_returns(&self, weights: &[T]) -> Vec<T> {
        self.returns
            .row_iter()
            .map(|r| r.iter().zip(weights).map(|(&x, &w)| x * w).sum())
            .collect()
    }

    /// Column means: the sample estimate of each asset's expected return.
    pub fn column_means(&self) -> Vec<T> {
        let n = self.n_assets();
        let mut acc = vec![T::zero(); n];
        for r in self.returns.row_iter() {
            for (a, &x) in acc.iter_mut().zip(r) {
                *a = *a + x;
            }
        }
        let s = T::from_count(self.n_scenarios());
        acc.into_iter().map(|a| a / s).collect()
    }
}
