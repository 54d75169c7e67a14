//! Bounded-variable revised primal simplex.
//!
//! Every row `i` gets a logical variable `s_i` with `A x - s = 0` and the row
//! bounds moved onto `s_i`, so the solver only deals with variable bounds.
//!
//! Columns with a single nonzero (all logicals, and the excess-loss columns of
//! the scenario program) are kept out of the dense part of the basis: each one
//! "covers" its row, and only the remaining columns form a small square kernel
//! over the uncovered rows, which is LU-factorized from scratch every
//! iteration. For the tail-loss programs the kernel never exceeds the number of
//! assets plus one, however many scenarios there are.

use crate::cvar::lp::LinearProgram;
use crate::Scalar;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Status of every structural and logical variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub structural: Vec<BasisStatus>,
    pub logical: Vec<BasisStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure(String),
}

#[derive(Debug, Clone)]
pub struct SimplexOptions<T> {
    pub feasibility_tol: T,
    pub optimality_tol: T,
    pub pivot_tol: T,
    /// Defaults to `20 * (rows + columns) + 1000`.
    pub max_iterations: Option<usize>,
}

impl<T: Scalar> Default for SimplexOptions<T> {
    fn default() -> Self {
        Self {
            feasibility_tol: T::FEASIBILITY_TOL,
            optimality_tol: T::OPTIMALITY_TOL,
            pivot_tol: T::PIVOT_TOL,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Structural values; meaningful when optimal.
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

/// Dense LU with partial pivoting: `P A = L U`.
#[derive(Debug, Clone)]
struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    fn factor(mut a: Vec<T>, n: usize, tol: T) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= tol {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / piv;
                if f == T::zero() {
                    continue;
                }
                a[r * n + k] = f;
                for c in k + 1..n {
                    let u = a[k * n + c];
                    a[r * n + c] = a[r * n + c] - f * u;
                }
            }
        }
        Some(Self { n, lu: a, perm })
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s = s - self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s = s - self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }

    fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = b.to_vec();
        for r in 0..n {
            let mut s = z[r];
            for c in 0..r {
                s = s - self.lu[c * n + r] * z[c];
            }
            z[r] = s / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut s = z[r];
            for c in r + 1..n {
                s = s - self.lu[c * n + r] * z[c];
            }
            z[r] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }
}

/// Column-compressed problem in computational form.
struct Problem<T> {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
    cost: Vec<T>,
    singleton: Vec<Option<(usize, T)>>,
}

impl<T: Scalar> Problem<T> {
    fn new(lp: &LinearProgram<T>) -> Self {
        let n = lp.variables.len();
        let m = lp.constraints.len();
        let mut counts = vec![0usize; n];
        for c in &lp.constraints {
            for &(j, v) in &c.terms {
                if v != T::zero() {
                    counts[j] += 1;
                }
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![T::zero(); nnz];
        let mut fill = col_start.clone();
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, v) in &c.terms {
                if v != T::zero() {
                    col_row[fill[j]] = i;
                    col_val[fill[j]] = v;
                    fill[j] += 1;
                }
            }
        }
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for v in &lp.variables {
            lower.push(v.lower);
            upper.push(v.upper);
            cost.push(v.cost);
        }
        for c in &lp.constraints {
            lower.push(c.lower);
            upper.push(c.upper);
            cost.push(T::zero());
        }
        let mut singleton = Vec::with_capacity(n + m);
        for j in 0..n {
            singleton.push((counts[j] == 1).then(|| (col_row[col_start[j]], col_val[col_start[j]])));
        }
        for i in 0..m {
            singleton.push(Some((i, -T::one())));
        }
        Self { n, m, col_start, col_row, col_val, lower, upper, cost, singleton }
    }

    #[inline]
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, T)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else {
            f(j - self.n, -T::one());
        }
    }

    #[inline]
    fn dot_col(&self, j: usize, y: &[T]) -> T {
        if j < self.n {
            let mut s = T::zero();
            for k in self.col_start[j]..self.col_start[j + 1] {
                s = s + self.col_val[k] * y[self.col_row[k]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn resting_status(&self, j: usize) -> BasisStatus {
        if self.lower[j].is_finite() {
            BasisStatus::AtLower
        } else if self.upper[j].is_finite() {
            BasisStatus::AtUpper
        } else {
            BasisStatus::Free
        }
    }

    fn nonbasic_value(&self, j: usize, st: BasisStatus) -> T {
        match st {
            BasisStatus::AtLower => self.lower[j],
            BasisStatus::AtUpper => self.upper[j],
            _ => T::zero(),
        }
    }
}

/// Basis factorization: singleton columns covering rows plus a dense kernel.
struct Factor<T> {
    cover: Vec<usize>,
    cover_val: Vec<T>,
    kernel_cols: Vec<usize>,
    kernel_rows: Vec<usize>,
    lu: DenseLu<T>,
}

impl<T: Scalar> Factor<T> {
    /// Factorizes the basic set, repairing it if it is not a nonsingular
    /// square basis: dependent columns leave and logicals fill the uncovered
    /// rows. Returns the factor and whether `basic` was rewritten.
    fn build(p: &Problem<T>, basic: &mut Vec<usize>, tol: T) -> (Self, bool) {
        let m = p.m;
        let mut cover = vec![NONE; m];
        let mut cover_val = vec![T::zero(); m];
        let mut candidates = Vec::new();
        for &j in basic.iter() {
            match p.singleton[j] {
                Some((r, v)) if cover[r] == NONE && v.abs() > tol => {
                    cover[r] = j;
                    cover_val[r] = v;
                }
                _ => candidates.push(j),
            }
        }
        let rows: Vec<usize> = (0..m).filter(|&r| cover[r] == NONE).collect();
        let mut row_pos = vec![NONE; m];
        for (i, &r) in rows.iter().enumerate() {
            row_pos[r] = i;
        }

        // Rank-revealing elimination on the rectangular kernel block to pick
        // a nonsingular square subset.
        let nr = rows.len();
        let nc = candidates.len();
        let mut block = vec![T::zero(); nr * nc];
        for (c, &j) in candidates.iter().enumerate() {
            p.for_col(j, |r, v| {
                if row_pos[r] != NONE {
                    block[row_pos[r] * nc + c] = v;
                }
            });
        }
        let mut row_used = vec![false; nr];
        let mut kernel_cols = Vec::with_capacity(nc);
        let mut dropped = Vec::new();
        let mut piv_rows = Vec::with_capacity(nc);
        for c in 0..nc {
            let mut best = tol;
            let mut pr = NONE;
            for r in 0..nr {
                if !row_used[r] && block[r * nc + c].abs() > best {
                    best = block[r * nc + c].abs();
                    pr = r;
                }
            }
            if pr == NONE {
                dropped.push(candidates[c]);
                continue;
            }
            row_used[pr] = true;
            piv_rows.push(pr);
            kernel_cols.push(candidates[c]);
            let piv = block[pr * nc + c];
            for r in 0..nr {
                if row_used[r] {
                    continue;
                }
                let f = block[r * nc + c] / piv;
                if f != T::zero() {
                    for cc in c + 1..nc {
                        let u = block[pr * nc + cc];
                        block[r * nc + cc] = block[r * nc + cc] - f * u;
                    }
                }
            }
        }
        let mut added = false;
        for r in 0..nr {
            if !row_used[r] {
                let row = rows[r];
                cover[row] = p.n + row;
                cover_val[row] = -T::one();
                added = true;
            }
        }
        let mut kernel_rows: Vec<usize> = piv_rows.iter().map(|&r| rows[r]).collect();
        kernel_rows.sort_unstable();

        let repaired = !dropped.is_empty() || added || basic.len() != m;
        if repaired {
            basic.clear();
            basic.extend(cover.iter().copied().filter(|&j| j != NONE));
            basic.extend(kernel_cols.iter().copied());
        }

        let q = kernel_cols.len();
        let mut kpos = vec![NONE; m];
        for (i, &r) in kernel_rows.iter().enumerate() {
            kpos[r] = i;
        }
        let mut dense = vec![T::zero(); q * q];
        for (c, &j) in kernel_cols.iter().enumerate() {
            p.for_col(j, |r, v| {
                if kpos[r] != NONE {
                    dense[kpos[r] * q + c] = v;
                }
            });
        }
        // The elimination above already certified nonsingularity; a failure
        // here would mean severe cancellation.
        let lu = DenseLu::factor(dense, q, T::zero()).unwrap_or(DenseLu { n: 0, lu: Vec::new(), perm: Vec::new() });
        (Self { cover, cover_val, kernel_cols, kernel_rows, lu }, repaired)
    }

    fn healthy(&self) -> bool {
        self.lu.n == self.kernel_cols.len()
    }

    /// Solves `B z = rhs`, writing the value for each basic variable into
    /// `out[var]`.
    fn ftran(&self, p: &Problem<T>, rhs: &[T], out: &mut [T]) {
        let rk: Vec<T> = self.kernel_rows.iter().map(|&r| rhs[r]).collect();
        let zk = self.lu.solve(&rk);
        let mut t = rhs.to_vec();
        for (c, &j) in self.kernel_cols.iter().enumerate() {
            let z = zk[c];
            out[j] = z;
            if z != T::zero() {
                p.for_col(j, |r, v| t[r] = t[r] - v * z);
            }
        }
        for (r, &j) in self.cover.iter().enumerate() {
            if j != NONE {
                out[j] = t[r] / self.cover_val[r];
            }
        }
    }

    /// Solves `B^T y = c_B`.
    fn btran(&self, p: &Problem<T>, cost: impl Fn(usize) -> T) -> Vec<T> {
        let m = p.m;
        let mut y = vec![T::zero(); m];
        for r in 0..m {
            let j = self.cover[r];
            if j != NONE {
                y[r] = cost(j) / self.cover_val[r];
            }
        }
        let rhs: Vec<T> = self
            .kernel_cols
            .iter()
            .map(|&j| {
                let mut s = cost(j);
                p.for_col(j, |r, v| {
                    if self.cover[r] != NONE {
                        s = s - v * y[r];
                    }
                });
                s
            })
            .collect();
        let yk = self.lu.solve_transpose(&rhs);
        for (i, &r) in self.kernel_rows.iter().enumerate() {
            y[r] = yk[i];
        }
        y
    }
}

/// Solves `lp` (always a minimization), optionally starting from `warm`.
pub fn solve<T: Scalar>(lp: &LinearProgram<T>, options: &SimplexOptions<T>, warm: Option<&Basis>) -> LpSolution<T> {
    let p = Problem::new(lp);
    let (n, m) = (p.n, p.m);
    let nt = n + m;
    let fail = |status: LpStatus, iterations: usize| LpSolution {
        status,
        x: vec![T::nan(); n],
        objective: T::nan(),
        iterations,
        basis: None,
    };
    let ftol = options.feasibility_tol;
    let otol = options.optimality_tol;
    let ptol = options.pivot_tol;

    for j in 0..nt {
        if p.lower[j] > p.upper[j] + ftol || p.lower[j] == T::infinity() || p.upper[j] == T::neg_infinity() {
            return fail(LpStatus::Infeasible, 0);
        }
        if p.lower[j].is_nan() || p.upper[j].is_nan() || !p.cost[j].is_finite() {
            return fail(LpStatus::NumericalFailure("non-finite problem data".into()), 0);
        }
    }
    if p.col_val.iter().any(|v| !v.is_finite()) {
        return fail(LpStatus::NumericalFailure("non-finite coefficient".into()), 0);
    }
    // Crossed bounds within tolerance collapse to a fixed value.
    let mut lower = p.lower.clone();
    let mut upper = p.upper.clone();
    for j in 0..nt {
        if lower[j] > upper[j] {
            let mid = (lower[j] + upper[j]) / T::lit(2.0);
            lower[j] = mid;
            upper[j] = mid;
        }
    }
    let p = Problem { lower, upper, ..p };

    let mut status = vec![BasisStatus::AtLower; nt];
    let mut basic: Vec<usize> = Vec::with_capacity(m);
    match warm {
        Some(b) if b.structural.len() == n && b.logical.len() == m => {
            for j in 0..nt {
                let st = if j < n { b.structural[j] } else { b.logical[j - n] };
                status[j] = match st {
                    BasisStatus::Basic => {
                        basic.push(j);
                        BasisStatus::Basic
                    }
                    BasisStatus::AtUpper if p.upper[j].is_finite() => BasisStatus::AtUpper,
                    BasisStatus::AtLower if p.lower[j].is_finite() => BasisStatus::AtLower,
                    _ => p.resting_status(j),
                };
            }
        }
        _ => {
            for j in 0..n {
                status[j] = p.resting_status(j);
            }
            for i in 0..m {
                status[n + i] = BasisStatus::Basic;
                basic.push(n + i);
            }
        }
    }

    let max_iter = options.max_iterations.unwrap_or(20 * nt + 1000);
    let mut xval = vec![T::zero(); nt];
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let mut best_merit = T::infinity();
    let mut last_phase_one = true;

    loop {
        let (factor, repaired) = Factor::build(&p, &mut basic, ptol);
        if !factor.healthy() {
            return fail(LpStatus::NumericalFailure("singular basis".into()), iterations);
        }
        if repaired {
            let mut is_basic = vec![false; nt];
            for &j in &basic {
                is_basic[j] = true;
            }
            for j in 0..nt {
                if is_basic[j] {
                    status[j] = BasisStatus::Basic;
                } else if status[j] == BasisStatus::Basic {
                    status[j] = p.resting_status(j);
                }
            }
        }

        // Basic values from the nonbasic ones: B x_B = -N x_N.
        let mut rhs = vec![T::zero(); m];
        for j in 0..nt {
            if status[j] != BasisStatus::Basic {
                let v = p.nonbasic_value(j, status[j]);
                xval[j] = v;
                if v != T::zero() {
                    p.for_col(j, |r, a| rhs[r] = rhs[r] - a * v);
                }
            }
        }
        factor.ftran(&p, &rhs, &mut xval);

        let mut infeas = T::zero();
        for &j in &basic {
            let x = xval[j];
            if !x.is_finite() {
                return fail(LpStatus::NumericalFailure("non-finite basic value".into()), iterations);
            }
            infeas = infeas + (p.lower[j] - x).max(T::zero()) + (x - p.upper[j]).max(T::zero());
        }
        let below = |j: usize| xval[j] < p.lower[j] - ftol;
        let above = |j: usize| xval[j] > p.upper[j] + ftol;
        let phase_one = basic.iter().any(|&j| below(j) || above(j));
        if phase_one != last_phase_one {
            best_merit = T::infinity();
            stall = 0;
            last_phase_one = phase_one;
        }
        let merit = if phase_one {
            infeas
        } else {
            (0..n).map(|j| p.cost[j] * xval[j]).sum()
        };
        if merit < best_merit - ftol * T::lit(1e-3) {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
        }
        let bland = stall > 50;

        let phase_cost = |j: usize| -> T {
            if phase_one {
                if below(j) {
                    -T::one()
                } else if above(j) {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                p.cost[j]
            }
        };
        let y = factor.btran(&p, &phase_cost);

        // Pricing.
        let mut entering = NONE;
        let mut dir = T::zero();
        let mut best = T::zero();
        for j in 0..nt {
            let st = status[j];
            if st == BasisStatus::Basic || p.is_fixed(j) {
                continue;
            }
            let c = if phase_one { T::zero() } else { p.cost[j] };
            let d = c - p.dot_col(j, &y);
            let (eligible, sigma) = match st {
                BasisStatus::AtLower => (d < -otol, T::one()),
                BasisStatus::AtUpper => (d > otol, -T::one()),
                BasisStatus::Free => (d.abs() > otol, if d < T::zero() { T::one() } else { -T::one() }),
                BasisStatus::Basic => (false, T::zero()),
            };
            if !eligible {
                continue;
            }
            if bland {
                entering = j;
                dir = sigma;
                break;
            }
            if d.abs() > best {
                best = d.abs();
                entering = j;
                dir = sigma;
            }
        }
        if entering == NONE {
            if phase_one {
                return fail(LpStatus::Infeasible, iterations);
            }
            let x: Vec<T> = xval[..n].to_vec();
            let objective = lp.objective_value(&x);
            let basis = Basis {
                structural: status[..n].to_vec(),
                logical: status[n..].to_vec(),
            };
            return LpSolution { status: LpStatus::Optimal, x, objective, iterations, basis: Some(basis) };
        }
        if iterations >= max_iter {
            return fail(LpStatus::NumericalFailure(format!("iteration limit {max_iter} reached")), iterations);
        }
        iterations += 1;

        // Column of the entering variable in the current basis.
        let mut acol = vec![T::zero(); m];
        p.for_col(entering, |r, v| acol[r] = v);
        let mut alpha = vec![T::zero(); nt];
        factor.ftran(&p, &acol, &mut alpha);

        // Harris two-pass ratio test; basic var j moves at rate -dir*alpha_j.
        let eff_bounds = |j: usize| -> (T, T) {
            if phase_one && below(j) {
                (T::neg_infinity(), p.lower[j])
            } else if phase_one && above(j) {
                (p.upper[j], T::infinity())
            } else {
                (p.lower[j], p.upper[j])
            }
        };
        let mut theta_max = T::infinity();
        for &j in &basic {
            let rate = -dir * alpha[j];
            let (lo, hi) = eff_bounds(j);
            if rate < -ptol && lo.is_finite() {
                theta_max = theta_max.min((xval[j] - (lo - ftol)) / -rate);
            } else if rate > ptol && hi.is_finite() {
                theta_max = theta_max.min(((hi + ftol) - xval[j]) / rate);
            }
        }
        let flip = p.upper[entering] - p.lower[entering];
        if flip.is_finite() && flip <= theta_max {
            status[entering] = if status[entering] == BasisStatus::AtLower {
                BasisStatus::AtUpper
            } else {
                BasisStatus::AtLower
            };
            continue;
        }
        if theta_max == T::infinity() {
            if phase_one {
                return fail(LpStatus::NumericalFailure("unbounded phase-one ray".into()), iterations);
            }
            return fail(LpStatus::Unbounded, iterations);
        }
        let mut leave = NONE;
        let mut leave_rate = T::zero();
        let mut leave_size = T::zero();
        for &j in &basic {
            let rate = -dir * alpha[j];
            let (lo, hi) = eff_bounds(j);
            let ratio = if rate < -ptol && lo.is_finite() {
                (xval[j] - lo) / -rate
            } else if rate > ptol && hi.is_finite() {
                (hi - xval[j]) / rate
            } else {
                continue;
            };
            if ratio > theta_max {
                continue;
            }
            let better = if bland {
                leave == NONE || j < leave
            } else {
                rate.abs() > leave_size
            };
            if better {
                leave = j;
                leave_rate = rate;
                leave_size = rate.abs();
            }
        }
        if leave == NONE {
            return fail(LpStatus::NumericalFailure("ratio test found no pivot".into()), iterations);
        }
        let leaving_status = if leave_rate < T::zero() {
            if phase_one && above(leave) {
                BasisStatus::AtUpper
            } else {
                BasisStatus::AtLower
            }
        } else if phase_one && below(leave) {
            BasisStatus::AtLower
        } else {
            BasisStatus::AtUpper
        };
        status[leave] = if p.is_fixed(leave) {
            BasisStatus::AtLower
        } else if (leaving_status == BasisStatus::AtLower && p.lower[leave].is_finite())
            || (leaving_status == BasisStatus::AtUpper && p.upper[leave].is_finite())
        {
            leaving_status
        } else {
            p.resting_status(leave)
        };
        status[entering] = BasisStatus::Basic;
        let pos = basic.iter().position(|&j| j == leave).expect("leaving variable is basic");
        basic[pos] = entering;
    }
}
