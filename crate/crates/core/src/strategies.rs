//! The nine tail-loss problems P0..P8: constraint builders over attribution
//! quantities, the two-stage procedure that makes selection constraints
//! linear, and the momentum fallback on infeasible days.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{attribute, AttributionError, ExpectedReturns, WeightVector};
use crate::cvar::{
    build_etl_lp, shift_etl_basis, solve_lp_with, Basis, CvarError, EtlLayout, ScenarioMatrix, SimplexOptions,
    SolveOutcome, SolveStatus, TailConvention, WeightConstraint,
};
use crate::market_data::ClassPartition;
use crate::Scalar;

/// Largest constraint violation an audited day may show.
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("unknown strategy {0:?} (expected P0..P8)")]
    UnknownStrategy(String),
    #[error("quantile level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("bound for {family}: lower {lower} exceeds upper {upper}")]
    InvalidBounds { family: &'static str, lower: f64, upper: f64 },
    #[error("selection rows need fixed class weights from a first stage")]
    MissingClassTotals,
    #[error("{0} is solved in a single stage")]
    NotTwoStage(StrategyId),
    #[error("expected {expected} class totals, got {actual}")]
    ClassTotalsMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Cvar(#[from] CvarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyId {
    P0,
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    P8,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::P0,
        StrategyId::P1,
        StrategyId::P2,
        StrategyId::P3,
        StrategyId::P4,
        StrategyId::P5,
        StrategyId::P6,
        StrategyId::P7,
        StrategyId::P8,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Strategies whose selection-effect rows need fixed class totals.
    pub fn is_two_stage(self) -> bool {
        matches!(self, StrategyId::P2 | StrategyId::P5 | StrategyId::P7 | StrategyId::P8)
    }

    pub fn stage_count(self) -> usize {
        if self.is_two_stage() {
            2
        } else {
            1
        }
    }

    /// Constraint families of the full problem.
    pub fn constraint_families(self) -> &'static [Family] {
        use Family::*;
        match self {
            StrategyId::P0 => &[],
            StrategyId::P1 => &[AaTotal],
            StrategyId::P2 => &[AaTotal, SeTotal],
            StrategyId::P3 => &[AaTotal, SeBarTotal],
            StrategyId::P4 => &[AaClass],
            StrategyId::P5 => &[AaClass, SeClass],
            StrategyId::P6 => &[AaClass, SeBarClass],
            StrategyId::P7 => &[AaTotal, SeClass],
            StrategyId::P8 => &[AaClass, SeTotal],
        }
    }

    /// Families solved in the given stage. Stage two pins class totals, which
    /// fixes every allocation quantity, so only selection rows are added.
    fn stage_families(self, stage: Stage) -> &'static [Family] {
        use Family::*;
        match (self, stage) {
            (StrategyId::P2 | StrategyId::P7, Stage::One) => &[AaTotal],
            (StrategyId::P5 | StrategyId::P8, Stage::One) => &[AaClass],
            (StrategyId::P2 | StrategyId::P8, Stage::Two) => &[SeTotal],
            (StrategyId::P5 | StrategyId::P7, Stage::Two) => &[SeClass],
            (id, _) => id.constraint_families(),
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.index())
    }
}

impl FromStr for StrategyId {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix('P').or_else(|| t.strip_prefix('p'));
        digits
            .and_then(|d| d.parse::<usize>().ok())
            .and_then(|i| StrategyId::ALL.get(i).copied())
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

/// A constrained attribution quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    AaTotal,
    AaClass,
    SeTotal,
    SeClass,
    SeBarTotal,
    SeBarClass,
}

impl Family {
    fn needs_class_totals(self) -> bool {
        matches!(self, Family::SeTotal | Family::SeClass)
    }

    fn name(self) -> &'static str {
        match self {
            Family::AaTotal | Family::AaClass => "AA",
            Family::SeTotal | Family::SeClass => "SE",
            Family::SeBarTotal | Family::SeBarClass => "SEbar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound<T> {
    pub lower: T,
    pub upper: T,
}

impl<T: Scalar> Bound<T> {
    pub fn at_least(lower: T) -> Self {
        Self { lower, upper: T::infinity() }
    }
}

/// Bounds `a <= quantity <= b` shared by every row of a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBounds<T> {
    pub aa: Bound<T>,
    pub se: Bound<T>,
    pub se_bar: Bound<T>,
}

impl<T: Scalar> Default for ConstraintBounds<T> {
    fn default() -> Self {
        let b = Bound::at_least(T::zero());
        Self { aa: b, se: b, se_bar: b }
    }
}

impl<T: Scalar> ConstraintBounds<T> {
    fn for_family(&self, f: Family) -> Bound<T> {
        match f {
            Family::AaTotal | Family::AaClass => self.aa,
            Family::SeTotal | Family::SeClass => self.se,
            Family::SeBarTotal | Family::SeBarClass => self.se_bar,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec<T> {
    pub id: StrategyId,
    pub alpha: T,
    pub bounds: ConstraintBounds<T>,
    pub tail: TailConvention,
}

impl<T: Scalar> StrategySpec<T> {
    pub fn new(id: StrategyId, alpha: T) -> Result<Self, StrategyError> {
        Self::with_bounds(id, alpha, ConstraintBounds::default())
    }

    pub fn with_bounds(id: StrategyId, alpha: T, bounds: ConstraintBounds<T>) -> Result<Self, StrategyError> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(StrategyError::InvalidAlpha(alpha.to_f64_lossy()));
        }
        for (family, b) in [("AA", bounds.aa), ("SE", bounds.se), ("SEbar", bounds.se_bar)] {
            if b.lower.is_nan() || b.upper.is_nan() || b.lower > b.upper {
                return Err(StrategyError::InvalidBounds {
                    family,
                    lower: b.lower.to_f64_lossy(),
                    upper: b.upper.to_f64_lossy(),
                });
            }
        }
        Ok(Self { id, alpha, bounds, tail: TailConvention::default() })
    }
}

/// Benchmark class weights and returns, constants of every constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkView<T> {
    pub class_weight: Vec<T>,
    pub class_return: Vec<T>,
    pub total_return: T,
}

impl<T: Scalar> BenchmarkView<T> {
    pub fn new(
        benchmark: &WeightVector<T>,
        partition: &ClassPartition,
        mu: &ExpectedReturns<T>,
    ) -> Result<Self, StrategyError> {
        let r = attribute(benchmark, benchmark, partition, mu)?;
        Ok(Self {
            class_weight: r.classes.iter().map(|c| c.weight_b).collect(),
            class_return: r.classes.iter().map(|c| c.return_b).collect(),
            total_return: r.totals.return_b,
        })
    }
}

/// Rows over the weights for one stage of `spec`, excluding the simplex rows
/// (`w >= 0`, `sum w = 1`) which the tail-loss program always carries.
///
/// Stage two requires `fixed_class_weights` and emits pin rows
/// `sum_j w_ij = W_i` (or `w_ij = 0` for each asset of a class with
/// `W_i = 0`) plus the selection rows. Per-class selection rows are only
/// emitted for classes with `W_i > 0`.
pub fn build_constraints<T: Scalar>(
    spec: &StrategySpec<T>,
    stage: Stage,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
    fixed_class_weights: Option<&[T]>,
) -> Result<Vec<WeightConstraint<T>>, StrategyError> {
    if stage == Stage::Two && !spec.id.is_two_stage() {
        return Err(StrategyError::NotTwoStage(spec.id));
    }
    let bench = BenchmarkView::new(benchmark, partition, mu)?;
    let families = spec.id.stage_families(stage);
    let fixed = match (stage, fixed_class_weights) {
        (Stage::Two, None) => return Err(StrategyError::MissingClassTotals),
        (Stage::Two, Some(w)) => {
            if w.len() != partition.n_classes() {
                return Err(StrategyError::ClassTotalsMismatch { expected: partition.n_classes(), actual: w.len() });
            }
            Some(w)
        }
        (Stage::One, _) => None,
    };
    let n = partition.n_assets();
    let m = partition.n_classes();
    let mu = mu.as_slice();
    let mut rows = Vec::new();

    if let Some(w) = fixed {
        for i in 0..m {
            if w[i] > T::zero() {
                let mut c = vec![T::zero(); n];
                for &a in partition.members(i) {
                    c[a] = T::one();
                }
                rows.push(WeightConstraint::equal_to(format!("pin_{}", i + 1), c, w[i]));
            } else {
                for &a in partition.members(i) {
                    let mut c = vec![T::zero(); n];
                    c[a] = T::one();
                    rows.push(WeightConstraint::equal_to(format!("zero_{}", partition.tickers()[a]), c, T::zero()));
                }
            }
        }
    }

    // Each row is `coeffs . w + constant` within the family bound.
    let mut push = |label: String, coeffs: Vec<T>, constant: T, b: Bound<T>| {
        rows.push(WeightConstraint { label, coeffs, lower: b.lower - constant, upper: b.upper - constant });
    };
    for &family in families {
        debug_assert!(fixed.is_some() || !family.needs_class_totals());
        let b = spec.bounds.for_family(family);
        match family {
            Family::AaTotal => {
                let mut c = vec![T::zero(); n];
                let mut k = T::zero();
                for i in 0..m {
                    let d = bench.class_return[i] - bench.total_return;
                    for &a in partition.members(i) {
                        c[a] = d;
                    }
                    k = k - bench.class_weight[i] * d;
                }
                push("AA".into(), c, k, b);
            }
            Family::AaClass => {
                for i in 0..m {
                    let d = bench.class_return[i] - bench.total_return;
                    let mut c = vec![T::zero(); n];
                    for &a in partition.members(i) {
                        c[a] = d;
                    }
                    push(format!("AA_{}", i + 1), c, -bench.class_weight[i] * d, b);
                }
            }
            Family::SeBarTotal => {
                let mut c = vec![T::zero(); n];
                for i in 0..m {
                    for &a in partition.members(i) {
                        c[a] = mu[a] - bench.class_return[i];
                    }
                }
                push("SEbar".into(), c, T::zero(), b);
            }
            Family::SeBarClass => {
                for i in 0..m {
                    let mut c = vec![T::zero(); n];
                    for &a in partition.members(i) {
                        c[a] = mu[a] - bench.class_return[i];
                    }
                    push(format!("SEbar_{}", i + 1), c, T::zero(), b);
                }
            }
            Family::SeTotal => {
                let w = fixed.expect("stage two");
                let mut c = vec![T::zero(); n];
                let mut k = T::zero();
                for i in 0..m {
                    let (wb, rb) = (bench.class_weight[i], bench.class_return[i]);
                    k = k - wb * rb;
                    if w[i] > T::zero() {
                        for &a in partition.members(i) {
                            c[a] = wb * mu[a] / w[i];
                        }
                    }
                }
                push("SE".into(), c, k, b);
            }
            Family::SeClass => {
                let w = fixed.expect("stage two");
                for i in 0..m {
                    if w[i] <= T::zero() {
                        continue;
                    }
                    let (wb, rb) = (bench.class_weight[i], bench.class_return[i]);
                    let mut c = vec![T::zero(); n];
                    for &a in partition.members(i) {
                        c[a] = wb * mu[a] / w[i];
                    }
                    push(format!("SE_{}", i + 1), c, -wb * rb, b);
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayStatus {
    Optimal,
    NoSolutionFallback,
}

/// Outcome of one optimization day.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySolve<T> {
    pub date: Option<NaiveDate>,
    pub status: DayStatus,
    /// Optimized weights, or the previous day's weights on fallback.
    pub weights: WeightVector<T>,
    pub stage_count: usize,
    /// Solver status of every stage attempted.
    pub stage_status: Vec<SolveStatus>,
    /// Minimized tail loss of every stage that reached optimality.
    pub stage_objectives: Vec<T>,
    pub iterations: usize,
}

impl<T: Scalar> DailySolve<T> {
    pub fn is_fallback(&self) -> bool {
        self.status == DayStatus::NoSolutionFallback
    }

    /// Objective of the last stage, when the day was solved.
    pub fn objective(&self) -> Option<T> {
        match self.status {
            DayStatus::Optimal => self.stage_objectives.last().copied(),
            DayStatus::NoSolutionFallback => None,
        }
    }
}

#[derive(Debug, Clone)]
struct WarmSlot {
    basis: Basis,
    layout: EtlLayout,
    day: usize,
    /// Iterations of the last cold solve in this slot.
    cold_iterations: usize,
}

const WARM_MIN_BUDGET: usize = 100;

/// Final bases of the previous day's stages, reused as starting points when
/// the scenario window moves forward.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    slots: [Option<WarmSlot>; 2],
}

impl WarmStart {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Divides a row by its largest coefficient so tolerances act on comparable
/// magnitudes across rows.
fn normalized<T: Scalar>(rows: Vec<WeightConstraint<T>>) -> Vec<WeightConstraint<T>> {
    rows.into_iter()
        .map(|mut r| {
            let scale = r.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
            if scale > T::zero() && scale != T::one() {
                for c in &mut r.coeffs {
                    *c = *c / scale;
                }
                r.lower = r.lower / scale;
                r.upper = r.upper / scale;
            }
            r
        })
        .collect()
}

fn solve_stage<T: Scalar>(
    scenarios: &ScenarioMatrix<T>,
    spec: &StrategySpec<T>,
    rows: Vec<WeightConstraint<T>>,
    warm: Option<(&mut Option<WarmSlot>, usize)>,
) -> Result<SolveOutcome<T>, StrategyError> {
    let lp = build_etl_lp(scenarios, spec.alpha, &normalized(rows), spec.tail)?;
    let layout = lp.layout.expect("tail-loss program has a layout");
    let opts = SimplexOptions::default();
    let Some((slot, day)) = warm else {
        return Ok(solve_lp_with(&lp, &opts, None));
    };
    let hint = slot.as_ref().and_then(|s| {
        let shift = day.checked_sub(s.day)?;
        (shift < layout.n_scenarios && s.layout.n_assets == layout.n_assets)
            .then(|| (shift_etl_basis(&s.basis, &s.layout, &layout, shift), s.cold_iterations))
    });
    // A warm start that drifts longer than a cold solve took is abandoned.
    let (out, cold_iterations) = match hint {
        Some((basis, cold)) => {
            let capped = SimplexOptions { max_iterations: Some(cold.max(WARM_MIN_BUDGET)), ..opts.clone() };
            let out = solve_lp_with(&lp, &capped, Some(&basis));
            if out.is_optimal() {
                (out, cold)
            } else {
                let out = solve_lp_with(&lp, &opts, None);
                let its = out.iterations;
                (out, its)
            }
        }
        None => {
            let out = solve_lp_with(&lp, &opts, None);
            let its = out.iterations;
            (out, its)
        }
    };
    if let (true, Some(basis)) = (out.is_optimal(), out.basis.clone()) {
        *slot = Some(WarmSlot { basis, layout, day, cold_iterations });
    }
    Ok(out)
}

/// Rescales each class so its total equals the pinned value exactly.
fn enforce_class_totals<T: Scalar>(w: &WeightVector<T>, partition: &ClassPartition, totals: &[T]) -> WeightVector<T> {
    let mut v = w.as_slice().to_vec();
    for (i, &target) in totals.iter().enumerate() {
        let members = partition.members(i);
        let have: T = members.iter().map(|&a| v[a]).sum();
        for &a in members {
            v[a] = if have > T::zero() { v[a] * target / have } else { T::zero() };
        }
    }
    WeightVector::new(v).unwrap_or_else(|_| w.clone())
}

/// Solves one day of `spec` from scratch.
pub fn solve_day<T: Scalar>(
    spec: &StrategySpec<T>,
    scenarios: &ScenarioMatrix<T>,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
    previous_weights: &WeightVector<T>,
) -> Result<DailySolve<T>, StrategyError> {
    run_day(spec, scenarios, benchmark, partition, mu, previous_weights, None)
}

/// [`solve_day`] starting from the bases stored in `warm`; `day` is the index
/// of the first scenario row in the full return panel.
pub fn solve_day_warm<T: Scalar>(
    spec: &StrategySpec<T>,
    scenarios: &ScenarioMatrix<T>,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
    previous_weights: &WeightVector<T>,
    warm: &mut WarmStart,
    day: usize,
) -> Result<DailySolve<T>, StrategyError> {
    run_day(spec, scenarios, benchmark, partition, mu, previous_weights, Some((warm, day)))
}

fn run_day<T: Scalar>(
    spec: &StrategySpec<T>,
    scenarios: &ScenarioMatrix<T>,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
    previous_weights: &WeightVector<T>,
    mut warm: Option<(&mut WarmStart, usize)>,
) -> Result<DailySolve<T>, StrategyError> {
    let n = partition.n_assets();
    for len in [scenarios.n_assets(), benchmark.len(), mu.len(), previous_weights.len()] {
        if len != n {
            return Err(CvarError::DimensionMismatch { expected: n, actual: len }.into());
        }
    }
    let mut day = DailySolve {
        date: None,
        status: DayStatus::NoSolutionFallback,
        weights: previous_weights.clone(),
        stage_count: spec.id.stage_count(),
        stage_status: Vec::with_capacity(2),
        stage_objectives: Vec::with_capacity(2),
        iterations: 0,
    };

    let rows = build_constraints(spec, Stage::One, benchmark, partition, mu, None)?;
    let slot0 = warm.as_mut().map(|(w, d)| (&mut w.slots[0], *d));
    let first = solve_stage(scenarios, spec, rows, slot0)?;
    day.iterations += first.iterations;
    day.stage_status.push(first.status.clone());
    let (Some(mut weights), true) = (first.weights, first.status == SolveStatus::Optimal) else {
        return Ok(day);
    };
    day.stage_objectives.push(first.objective);

    if spec.id.is_two_stage() {
        let totals = weights.class_weights(partition);
        let rows = build_constraints(spec, Stage::Two, benchmark, partition, mu, Some(&totals))?;
        let slot1 = warm.as_mut().map(|(w, d)| (&mut w.slots[1], *d));
        let second = solve_stage(scenarios, spec, rows, slot1)?;
        day.iterations += second.iterations;
        day.stage_status.push(second.status.clone());
        let (Some(w), true) = (second.weights, second.status == SolveStatus::Optimal) else {
            return Ok(day);
        };
        day.stage_objectives.push(second.objective);
        weights = enforce_class_totals(&w, partition, &totals);
    }
    day.status = DayStatus::Optimal;
    day.weights = weights;
    Ok(day)
}

/// One constrained quantity recomputed from the returned weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck<T> {
    pub label: String,
    pub value: T,
    pub lower: T,
    pub upper: T,
    pub violation: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport<T> {
    /// False on fallback days, which are not audited.
    pub audited: bool,
    pub checks: Vec<ConstraintCheck<T>>,
    pub max_violation: T,
}

impl<T: Scalar> AuditReport<T> {
    pub fn passes(&self, tol: T) -> bool {
        !self.audited || self.max_violation <= tol
    }
}

/// Recomputes every constrained attribution quantity of `solve` through the
/// attribution module, plus the simplex conditions.
pub fn verify_constraints<T: Scalar>(
    spec: &StrategySpec<T>,
    solve: &DailySolve<T>,
    benchmark: &WeightVector<T>,
    partition: &ClassPartition,
    mu: &ExpectedReturns<T>,
) -> Result<AuditReport<T>, StrategyError> {
    if solve.status != DayStatus::Optimal {
        return Ok(AuditReport { audited: false, checks: Vec::new(), max_violation: T::zero() });
    }
    let w = &solve.weights;
    let report = attribute(w, benchmark, partition, mu)?;
    let mut checks = Vec::new();
    let mut check = |label: String, value: T, b: Bound<T>| {
        let violation = (b.lower - value).max(value - b.upper).max(T::zero());
        checks.push(ConstraintCheck { label, value, lower: b.lower, upper: b.upper, violation });
    };
    let sum: T = w.as_slice().iter().copied().sum();
    check("budget".into(), sum, Bound { lower: T::one(), upper: T::one() });
    let min_w = w.as_slice().iter().copied().fold(T::infinity(), T::min);
    check("long_only".into(), min_w, Bound::at_least(T::zero()));
    for &family in spec.id.constraint_families() {
        let b = spec.bounds.for_family(family);
        let name = family.name();
        match family {
            Family::AaTotal => check(name.into(), report.totals.aa, b),
            Family::SeTotal => check(name.into(), report.totals.se, b),
            Family::SeBarTotal => check(name.into(), report.totals.se_bar, b),
            Family::AaClass | Family::SeClass | Family::SeBarClass => {
                for (i, c) in report.classes.iter().enumerate() {
                    let v = match family {
                        Family::AaClass => c.aa,
                        Family::SeBarClass => c.se_bar,
                        _ if c.weight_p > T::zero() => c.se,
                        _ => continue,
                    };
                    check(format!("{name}_{}", i + 1), v, b);
                }
            }
        }
    }
    let max_violation = checks.iter().map(|c| c.violation).fold(T::zero(), T::max);
    Ok(AuditReport { audited: true, checks, max_violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvar::{build_etl_lp, solve_lp};

    fn part(lists: &[&[&str]]) -> ClassPartition {
        let tickers: Vec<String> = lists.iter().flat_map(|l| l.iter().map(|s| s.to_string())).collect();
        let l: Vec<Vec<String>> = lists.iter().map(|l| l.iter().map(|s| s.to_string()).collect()).collect();
        ClassPartition::from_class_lists(&tickers, &l).unwrap()
    }

    fn scen(rows: &[Vec<f64>]) -> ScenarioMatrix<f64> {
        ScenarioMatrix::from_rows(rows).unwrap()
    }

    fn random_case(seed: u64, s: usize) -> (ClassPartition, ScenarioMatrix<f64>, ExpectedReturns<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = part(&[&["a", "b", "c"], &["d", "e"], &["f", "g", "h"]]);
        let rows: Vec<Vec<f64>> =
            (0..s).map(|_| (0..8).map(|a| rng.random_range(-0.03..0.03) + 0.001 * a as f64).collect()).collect();
        let sc = scen(&rows);
        let mu = ExpectedReturns::new(sc.column_means()).unwrap();
        (p, sc, mu)
    }

    #[test]
    fn parse_and_display() {
        assert_eq!("P7".parse::<StrategyId>().unwrap(), StrategyId::P7);
        assert_eq!("p0".parse::<StrategyId>().unwrap(), StrategyId::P0);
        assert!("P9".parse::<StrategyId>().is_err());
        assert!("X1".parse::<StrategyId>().is_err());
        assert_eq!(StrategyId::P8.to_string(), "P8");
        let two: Vec<_> = StrategyId::ALL.iter().filter(|s| s.is_two_stage()).collect();
        assert_eq!(two, [&StrategyId::P2, &StrategyId::P5, &StrategyId::P7, &StrategyId::P8]);
    }

    #[test]
    fn spec_validation() {
        assert!(StrategySpec::new(StrategyId::P1, 1.0).is_err());
        let mut b = ConstraintBounds::default();
        b.se = Bound { lower: 1.0, upper: 0.0 };
        assert!(matches!(
            StrategySpec::with_bounds(StrategyId::P2, 0.95, b),
            Err(StrategyError::InvalidBounds { family: "SE", .. })
        ));
    }

    #[test]
    fn p0_has_no_extra_rows() {
        let (p, _, mu) = random_case(1, 20);
        let spec = StrategySpec::new(StrategyId::P0, 0.95).unwrap();
        let rows = build_constraints(&spec, Stage::One, &WeightVector::uniform(8), &p, &mu, None).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn aa_row_vacuous_when_class_returns_match() {
        let p = part(&[&["a"], &["b"]]);
        let mu = ExpectedReturns::new(vec![0.01, 0.01]).unwrap();
        let spec = StrategySpec::new(StrategyId::P1, 0.95).unwrap();
        let rows = build_constraints(&spec, Stage::One, &WeightVector::uniform(2), &p, &mu, None).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].coeffs.iter().all(|&c| c == 0.0));
        assert_eq!((rows[0].lower, rows[0].upper), (0.0, f64::INFINITY));
    }

    #[test]
    fn stage_two_needs_totals_and_skips_empty_classes() {
        let (p, _, mu) = random_case(2, 20);
        let b = WeightVector::uniform(8);
        let spec = StrategySpec::new(StrategyId::P5, 0.95).unwrap();
        assert_eq!(
            build_constraints(&spec, Stage::Two, &b, &p, &mu, None),
            Err(StrategyError::MissingClassTotals)
        );
        let p1 = StrategySpec::new(StrategyId::P1, 0.95).unwrap();
        assert!(matches!(
            build_constraints(&p1, Stage::Two, &b, &p, &mu, Some(&[0.5, 0.5, 0.0])),
            Err(StrategyError::NotTwoStage(StrategyId::P1))
        ));
        let rows = build_constraints(&spec, Stage::Two, &b, &p, &mu, Some(&[0.0, 0.4, 0.6])).unwrap();
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(labels, ["zero_a", "zero_b", "zero_c", "pin_2", "pin_3", "SE_2", "SE_3"]);
    }

    #[test]
    fn linear_rows_reproduce_attribution() {
        // Every emitted row, evaluated at a weight vector with the pinned
        // class totals, must equal the attribution quantity it encodes.
        let (p, _, mu) = random_case(3, 30);
        let b = WeightVector::uniform(8);
        let w = WeightVector::new(vec![0.1, 0.05, 0.15, 0.0, 0.2, 0.3, 0.1, 0.1]).unwrap();
        let totals = w.class_weights(&p);
        let r = attribute(&w, &b, &p, &mu).unwrap();
        let zero = ConstraintBounds::default();
        let value = |row: &WeightConstraint<f64>| row.activity(w.as_slice()) - row.lower;
        for id in StrategyId::ALL {
            let spec = StrategySpec::with_bounds(id, 0.95, zero).unwrap();
            let stages: &[Stage] = if id.is_two_stage() { &[Stage::One, Stage::Two] } else { &[Stage::One] };
            for &stage in stages {
                let fixed = (stage == Stage::Two).then_some(&totals[..]);
                for row in build_constraints(&spec, stage, &b, &p, &mu, fixed).unwrap() {
                    let expect = match row.label.as_str() {
                        "AA" => r.totals.aa,
                        "SE" => r.totals.se,
                        "SEbar" => r.totals.se_bar,
                        l if l.starts_with("pin_") || l.starts_with("zero_") => {
                            assert!(row.violation(w.as_slice()) < 1e-15, "{l}");
                            continue;
                        }
                        l => {
                            let (fam, idx) = l.split_once('_').unwrap();
                            let c = &r.classes[idx.parse::<usize>().unwrap() - 1];
                            match fam {
                                "AA" => c.aa,
                                "SE" => c.se,
                                "SEbar" => c.se_bar,
                                _ => unreachable!(),
                            }
                        }
                    };
                    assert!((value(&row) - expect).abs() < 1e-15, "{id} {}: {} vs {expect}", row.label, value(&row));
                }
            }
        }
    }

    #[test]
    fn p0_matches_plain_program() {
        let (p, sc, mu) = random_case(4, 40);
        let b = WeightVector::uniform(8);
        let spec = StrategySpec::new(StrategyId::P0, 0.9).unwrap();
        let d = solve_day(&spec, &sc, &b, &p, &mu, &b).unwrap();
        let plain = solve_lp(&build_etl_lp(&sc, 0.9, &[], TailConvention::EmpiricalRank).unwrap());
        assert_eq!(d.status, DayStatus::Optimal);
        assert_eq!(d.weights, plain.weights.unwrap());
        assert_eq!(d.objective(), Some(plain.objective));
    }

    #[test]
    fn dominance_puts_everything_on_the_best_asset() {
        let p = part(&[&["a", "b"], &["c"]]);
        let rows: Vec<Vec<f64>> = (0..10).map(|s| vec![0.01 + 0.001 * s as f64, -0.01, 0.0]).collect();
        let sc = scen(&rows);
        let mu = ExpectedReturns::new(sc.column_means()).unwrap();
        let b = WeightVector::uniform(3);
        let d = solve_day(&StrategySpec::new(StrategyId::P0, 0.9).unwrap(), &sc, &b, &p, &mu, &b).unwrap();
        assert!((d.weights.as_slice()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_bound_falls_back_exactly() {
        let (p, sc, mu) = random_case(5, 30);
        let b = WeightVector::uniform(8);
        let prev = WeightVector::new(vec![0.3, 0.0, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1]).unwrap();
        let mut bounds = ConstraintBounds::default();
        bounds.se = Bound::at_least(1.0);
        let spec = StrategySpec::with_bounds(StrategyId::P2, 0.95, bounds).unwrap();
        let d = solve_day(&spec, &sc, &b, &p, &mu, &prev).unwrap();
        assert_eq!(d.status, DayStatus::NoSolutionFallback);
        assert_eq!(d.weights, prev);
        assert_eq!(d.stage_status.len(), 2);
        assert_eq!(d.stage_status[1], SolveStatus::Infeasible);
        let audit = verify_constraints(&spec, &d, &b, &p, &mu).unwrap();
        assert!(!audit.audited && audit.passes(0.0));
        // Identical inputs give an identical day.
        assert_eq!(solve_day(&spec, &sc, &b, &p, &mu, &prev).unwrap(), d);
    }

    #[test]
    fn p1_two_single_asset_classes() {
        let p = part(&[&["a"], &["b"]]);
        let rows = vec![vec![0.03, -0.01], vec![-0.02, 0.0], vec![0.01, -0.005], vec![0.0, 0.002]];
        let sc = scen(&rows);
        let mu = ExpectedReturns::new(vec![0.004, -0.003]).unwrap();
        let b = WeightVector::uniform(2);
        let spec = StrategySpec::new(StrategyId::P1, 0.75).unwrap();
        let d = solve_day(&spec, &sc, &b, &p, &mu, &b).unwrap();
        assert_eq!(d.status, DayStatus::Optimal);
        let r = attribute(&d.weights, &b, &p, &mu).unwrap();
        assert!(r.totals.aa >= -1e-7);
        // Overweighting the better class is what AA >= 0 requires.
        assert!(d.weights.as_slice()[0] >= 0.5 - 1e-9);
    }

    #[test]
    fn every_strategy_audits_clean_and_preserves_class_totals() {
        for seed in 0..6 {
            let (p, sc, mu) = random_case(100 + seed, 60);
            let b = WeightVector::uniform(8);
            for id in StrategyId::ALL {
                let spec = StrategySpec::new(id, 0.9).unwrap();
                let d = solve_day(&spec, &sc, &b, &p, &mu, &b).unwrap();
                let audit = verify_constraints(&spec, &d, &b, &p, &mu).unwrap();
                assert!(audit.passes(AUDIT_TOL), "{id} seed {seed}: {audit:?}");
                if d.status == DayStatus::Optimal && id.is_two_stage() {
                    let stage1 = StrategySpec::new(if matches!(id, StrategyId::P2 | StrategyId::P7) {
                        StrategyId::P1
                    } else {
                        StrategyId::P4
                    }, 0.9)
                    .unwrap();
                    let s1 = solve_day(&stage1, &sc, &b, &p, &mu, &b).unwrap();
                    let (t1, t2) = (s1.weights.class_weights(&p), d.weights.class_weights(&p));
                    for (x, y) in t1.iter().zip(&t2) {
                        assert!((x - y).abs() < 1e-9, "{id}: {t1:?} vs {t2:?}");
                    }
                    assert!(d.stage_objectives[1] >= d.stage_objectives[0] - 1e-9);
                }
            }
        }
    }

    #[test]
    fn nesting_p0_p1_p2() {
        for seed in 0..8 {
            let (p, sc, mu) = random_case(200 + seed, 50);
            let b = WeightVector::uniform(8);
            let obj = |id| {
                solve_day(&StrategySpec::new(id, 0.95).unwrap(), &sc, &b, &p, &mu, &b)
                    .unwrap()
                    .stage_objectives
                    .first()
                    .copied()
            };
            let (Some(o0), Some(o1), Some(o2)) = (obj(StrategyId::P0), obj(StrategyId::P1), obj(StrategyId::P2))
            else {
                continue;
            };
            assert!(o0 <= o1 + 1e-9 && o1 <= o2 + 1e-9, "{o0} {o1} {o2}");
        }
    }

    #[test]
    fn warm_and_cold_agree_on_objective() {
        let (p, sc, _) = random_case(7, 80);
        let b = WeightVector::uniform(8);
        for id in StrategyId::ALL {
            let spec = StrategySpec::new(id, 0.9).unwrap();
            let mut warm = WarmStart::new();
            for day in 0..20 {
                let rows: Vec<Vec<f64>> = (day..day + 60).map(|s| sc.row(s).to_vec()).collect();
                let w = scen(&rows);
                let mu = ExpectedReturns::new(w.column_means()).unwrap();
                let cold = solve_day(&spec, &w, &b, &p, &mu, &b).unwrap();
                let hot = solve_day_warm(&spec, &w, &b, &p, &mu, &b, &mut warm, day).unwrap();
                // Two-stage days depend on which optimal vertex stage one returns.
                if id.is_two_stage() {
                    continue;
                }
                assert_eq!(cold.status, hot.status, "{id} day {day}");
                if let (Some(x), Some(y)) = (cold.objective(), hot.objective()) {
                    assert!((x - y).abs() < 1e-9, "{id} day {day}: {x} vs {y}");
                }
            }
        }
    }
}
