//! Linear programs and the scenario reformulation of tail-loss minimization.

use std::fmt::Write as _;

use crate::attribution::WeightVector;
use crate::cvar::empirical::tail_count;
use crate::cvar::simplex::{self, Basis, BasisStatus, LpStatus, SimplexOptions};
use crate::cvar::{CvarError, ScenarioMatrix};
use crate::Scalar;

/// Role of a variable inside the tail-loss program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Weight(usize),
    /// Value-at-risk proxy.
    Zeta,
    /// Excess loss of one scenario over the VaR proxy.
    Excess(usize),
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable<T> {
    pub name: String,
    pub role: VarRole,
    pub lower: T,
    pub upper: T,
    pub cost: T,
}

/// `lower <= sum(coef * x[var]) <= upper`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint<T> {
    pub name: String,
    pub terms: Vec<(usize, T)>,
    pub lower: T,
    pub upper: T,
}

/// A linear constraint over the portfolio weights only, dense in the assets.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConstraint<T> {
    pub label: String,
    pub coeffs: Vec<T>,
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> WeightConstraint<T> {
    pub fn at_least(label: impl Into<String>, coeffs: Vec<T>, lower: T) -> Self {
        Self { label: label.into(), coeffs, lower, upper: T::infinity() }
    }

    pub fn equal_to(label: impl Into<String>, coeffs: Vec<T>, value: T) -> Self {
        Self { label: label.into(), coeffs, lower: value, upper: value }
    }

    pub fn activity(&self, weights: &[T]) -> T {
        self.coeffs.iter().zip(weights).map(|(&c, &w)| c * w).sum()
    }

    /// Amount by which `weights` violate the row (zero when satisfied).
    pub fn violation(&self, weights: &[T]) -> T {
        let a = self.activity(weights);
        (self.lower - a).max(a - self.upper).max(T::zero())
    }
}

/// Positions of the tail-loss program's variable and row blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtlLayout {
    pub n_assets: usize,
    pub n_scenarios: usize,
    /// Number of extra rows kept as rows (single-asset rows become bounds).
    pub n_extra_rows: usize,
    /// Tail size `k`: the objective weights each excess loss by `1/k`.
    pub tail_size: f64,
}

impl EtlLayout {
    pub fn zeta(&self) -> usize {
        self.n_assets
    }

    pub fn excess(&self, s: usize) -> usize {
        self.n_assets + 1 + s
    }

    pub fn scenario_row(&self, s: usize) -> usize {
        s
    }

    pub fn budget_row(&self) -> usize {
        self.n_scenarios
    }

    pub fn n_vars(&self) -> usize {
        self.n_assets + 1 + self.n_scenarios
    }

    pub fn n_rows(&self) -> usize {
        self.n_scenarios + 1 + self.n_extra_rows
    }
}

/// How the tail of the scenario distribution is sized in the program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailConvention {
    /// `k = ceil((1 - alpha) S)` scenarios, so the optimum equals the
    /// empirical ETL (mean of the `k` worst scenario returns).
    #[default]
    EmpiricalRank,
    /// `k = (1 - alpha) S`, the fractional Rockafellar-Uryasev weighting.
    Fractional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub variables: Vec<Variable<T>>,
    pub constraints: Vec<Constraint<T>>,
    /// Present when the program was produced by [`build_etl_lp`].
    pub layout: Option<EtlLayout>,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new() -> Self {
        Self { variables: Vec::new(), constraints: Vec::new(), layout: None }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, lower: T, upper: T, cost: T) -> usize {
        self.variables.push(Variable { name: name.into(), role: VarRole::Other, lower, upper, cost });
        self.variables.len() - 1
    }

    pub fn add_constraint(&mut self, name: impl Into<String>, terms: Vec<(usize, T)>, lower: T, upper: T) -> usize {
        self.constraints.push(Constraint { name: name.into(), terms, lower, upper });
        self.constraints.len() - 1
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.variables.iter().zip(x).map(|(v, &xi)| v.cost * xi).sum()
    }

    /// Largest bound or row violation of the point `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (v, &xi) in self.variables.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
        }
        for c in &self.constraints {
            let a: T = c.terms.iter().map(|&(j, coef)| coef * x[j]).sum();
            worst = worst.max(c.lower - a).max(a - c.upper);
        }
        worst
    }

    /// Writes the program in free-format MPS with `RANGES` and `BOUNDS`.
    pub fn to_mps(&self, name: &str) -> String {
        let mut out = String::new();
        let row_name = |i: usize| format!("R{i}");
        let col_name = |j: usize| format!("C{j}");
        let _ = writeln!(out, "NAME {name}");
        let _ = writeln!(out, "ROWS");
        let _ = writeln!(out, " N OBJ");
        for (i, c) in self.constraints.iter().enumerate() {
            let kind = match (c.lower.is_finite(), c.upper.is_finite()) {
                (true, true) if c.lower == c.upper => "E",
                (true, _) => "G",
                (false, true) => "L",
                (false, false) => "N",
            };
            let _ = writeln!(out, " {kind} {}", row_name(i));
        }
        let mut by_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); self.variables.len()];
        for (i, c) in self.constraints.iter().enumerate() {
            for &(j, coef) in &c.terms {
                by_col[j].push((i, coef));
            }
        }
        let _ = writeln!(out, "COLUMNS");
        for (j, v) in self.variables.iter().enumerate() {
            if v.cost != T::zero() {
                let _ = writeln!(out, " {} OBJ {}", col_name(j), v.cost);
            }
            for &(i, coef) in &by_col[j] {
                let _ = writeln!(out, " {} {} {}", col_name(j), row_name(i), coef);
            }
        }
        let _ = writeln!(out, "RHS");
        for (i, c) in self.constraints.iter().enumerate() {
            let rhs = if c.lower.is_finite() { c.lower } else { c.upper };
            if rhs.is_finite() && rhs != T::zero() {
                let _ = writeln!(out, " RHS {} {}", row_name(i), rhs);
            }
        }
        let ranged: Vec<_> = self
            .constraints
            .iter()
            .enumerate()
            .filter(|(_, c)| c.lower.is_finite() && c.upper.is_finite() && c.lower != c.upper)
            .collect();
        if !ranged.is_empty() {
            let _ = writeln!(out, "RANGES");
            for (i, c) in ranged {
                let _ = writeln!(out, " RNG {} {}", row_name(i), c.upper - c.lower);
            }
        }
        let _ = writeln!(out, "BOUNDS");
        for (j, v) in self.variables.iter().enumerate() {
            let c = col_name(j);
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) if v.lower == v.upper => {
                    let _ = writeln!(out, " FX BND {c} {}", v.lower);
                }
                (true, true) => {
                    if v.lower != T::zero() {
                        let _ = writeln!(out, " LO BND {c} {}", v.lower);
                    }
                    let _ = writeln!(out, " UP BND {c} {}", v.upper);
                }
                (true, false) => {
                    if v.lower != T::zero() {
                        let _ = writeln!(out, " LO BND {c} {}", v.lower);
                    }
                }
                (false, true) => {
                    let _ = writeln!(out, " MI BND {c}");
                    let _ = writeln!(out, " UP BND {c} {}", v.upper);
                }
                (false, false) => {
                    let _ = writeln!(out, " FR BND {c}");
                }
            }
        }
        let _ = writeln!(out, "ENDATA");
        out
    }
}

impl<T: Scalar> Default for LinearProgram<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Builds the scenario program
///
/// ```text
/// min  zeta + (1/k) sum_s u_s
/// s.t. r_s . w + zeta + u_s >= 0     (one row per scenario)
///      sum w = 1,  w >= 0,  u >= 0,  zeta free
///      extra rows over w
/// ```
///
/// Extra rows that touch a single asset are folded into that weight's bounds.
pub fn build_etl_lp<T: Scalar>(
    scenarios: &ScenarioMatrix<T>,
    alpha: T,
    extra: &[WeightConstraint<T>],
    tail: TailConvention,
) -> Result<LinearProgram<T>, CvarError> {
    let s = scenarios.n_scenarios();
    let n = scenarios.n_assets();
    if s == 0 || n == 0 {
        return Err(CvarError::EmptyScenarios);
    }
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(CvarError::InvalidAlpha(alpha.to_f64_lossy()));
    }
    for row in extra {
        if row.coeffs.len() != n {
            return Err(CvarError::DimensionMismatch { expected: n, actual: row.coeffs.len() });
        }
    }
    let tail_size = match tail {
        TailConvention::EmpiricalRank => T::from_count(tail_count(alpha, s)),
        TailConvention::Fractional => (T::one() - alpha) * T::from_count(s),
    };

    let mut lp = LinearProgram::new();
    for a in 0..n {
        let j = lp.add_variable(format!("w[{a}]"), T::zero(), T::infinity(), T::zero());
        lp.variables[j].role = VarRole::Weight(a);
    }
    let z = lp.add_variable("zeta", T::neg_infinity(), T::infinity(), T::one());
    lp.variables[z].role = VarRole::Zeta;
    let excess_cost = T::one() / tail_size;
    for k in 0..s {
        let j = lp.add_variable(format!("u[{k}]"), T::zero(), T::infinity(), excess_cost);
        lp.variables[j].role = VarRole::Excess(k);
    }
    for k in 0..s {
        let mut terms: Vec<(usize, T)> = scenarios.row(k).iter().copied().enumerate().collect();
        terms.push((z, T::one()));
        terms.push((n + 1 + k, T::one()));
        lp.add_constraint(format!("loss[{k}]"), terms, T::zero(), T::infinity());
    }
    lp.add_constraint("budget", (0..n).map(|a| (a, T::one())).collect(), T::one(), T::one());

    let mut kept = 0;
    for row in extra {
        let nz: Vec<(usize, T)> = row.coeffs.iter().copied().enumerate().filter(|&(_, c)| c != T::zero()).collect();
        if let [(a, c)] = nz[..] {
            let (lo, hi) = if c > T::zero() {
                (row.lower / c, row.upper / c)
            } else {
                (row.upper / c, row.lower / c)
            };
            let v = &mut lp.variables[a];
            v.lower = v.lower.max(lo);
            v.upper = v.upper.min(hi);
        } else {
            lp.add_constraint(row.label.clone(), nz, row.lower, row.upper);
            kept += 1;
        }
    }
    lp.layout = Some(EtlLayout {
        n_assets: n,
        n_scenarios: s,
        n_extra_rows: kept,
        tail_size: tail_size.to_f64_lossy(),
    });
    Ok(lp)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure(String),
}

/// Result of solving a tail-loss program.
#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub status: SolveStatus,
    /// Present iff `status` is optimal.
    pub weights: Option<WeightVector<T>>,
    /// Minimized tail-loss estimate.
    pub objective: T,
    /// VaR proxy at the optimum.
    pub zeta: T,
    pub iterations: usize,
    /// Final basis, usable as a warm start for a related program.
    pub basis: Option<Basis>,
}

impl<T: Scalar> SolveOutcome<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Solves a program from [`build_etl_lp`] with default tolerances.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> SolveOutcome<T> {
    solve_lp_with(lp, &SimplexOptions::default(), None)
}

pub fn solve_lp_with<T: Scalar>(
    lp: &LinearProgram<T>,
    options: &SimplexOptions<T>,
    warm: Option<&Basis>,
) -> SolveOutcome<T> {
    let sol = simplex::solve(lp, options, warm);
    let status = match sol.status {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::NumericalFailure(msg) => SolveStatus::NumericalFailure(msg),
    };
    let mut out = SolveOutcome {
        status,
        weights: None,
        objective: sol.objective,
        zeta: T::nan(),
        iterations: sol.iterations,
        basis: sol.basis,
    };
    if out.status != SolveStatus::Optimal {
        return out;
    }
    let Some(layout) = lp.layout else {
        return out;
    };
    out.zeta = sol.x[layout.zeta()];
    match WeightVector::from_solver(&sol.x[..layout.n_assets], options.feasibility_tol) {
        Ok(w) => out.weights = Some(w),
        Err(e) => {
            out.status = SolveStatus::NumericalFailure(format!("solver weights rejected: {e}"));
        }
    }
    out
}

/// Maps the final basis of one tail-loss program onto a program whose
/// scenario window has moved forward by `shift` rows. Scenarios that left the
/// window are dropped, new ones start with their loss rows slack, and extra
/// rows keep their statuses when their count is unchanged (slack otherwise). The solver repairs whatever does not fit.
pub fn shift_etl_basis(prev: &Basis, prev_layout: &EtlLayout, next_layout: &EtlLayout, shift: usize) -> Basis {
    let n = next_layout.n_assets;
    let mut structural = Vec::with_capacity(next_layout.n_vars());
    structural.extend_from_slice(&prev.structural[..n.min(prev_layout.n_assets)]);
    structural.resize(n, BasisStatus::AtLower);
    structural.push(prev.structural[prev_layout.zeta()]);
    let mut logical = Vec::with_capacity(next_layout.n_rows());
    for k in 0..next_layout.n_scenarios {
        let old = k + shift;
        if old < prev_layout.n_scenarios {
            structural.push(prev.structural[prev_layout.excess(old)]);
            logical.push(prev.logical[prev_layout.scenario_row(old)]);
        } else {
            structural.push(BasisStatus::AtLower);
            logical.push(BasisStatus::Basic);
        }
    }
    logical.push(prev.logical[prev_layout.budget_row()]);
    if next_layout.n_extra_rows == prev_layout.n_extra_rows {
        logical.extend_from_slice(&prev.logical[prev_layout.budget_row() + 1..]);
    }
    logical.resize(next_layout.n_rows(), BasisStatus::Basic);
    Basis { structural, logical }
}
