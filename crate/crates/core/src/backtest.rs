//! Rolling-window backtest: one optimization per day on the preceding window,
//! applied to that day's returns.

use std::io::Write;

use chrono::NaiveDate;
use thiserror::Error;

use crate::attribution::{
    attribute, log_return_decomposition_error, AttributionError, AttributionReport, ExpectedReturns, WeightVector,
};
use crate::market_data::{equi_weight_benchmark, ClassPartition, ReturnPanel, DATE_FORMAT};
use crate::strategies::{
    solve_day, solve_day_warm, verify_constraints, DailySolve, DayStatus, StrategyError, StrategySpec, WarmStart,
};
use crate::Scalar;

/// Four years of trading days.
pub const DEFAULT_WINDOW: usize = 1008;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("window {window} needs at least {} return rows, got {rows}", window + 1)]
    InsufficientData { window: usize, rows: usize },
    #[error("window must be at least 2 days, got {0}")]
    WindowTooSmall(usize),
    #[error("partition covers {partition} assets, returns have {returns}")]
    PartitionMismatch { partition: usize, returns: usize },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig<T> {
    pub window: usize,
    pub spec: StrategySpec<T>,
    pub initial_price: T,
    /// Start each day's solve from the previous day's final basis.
    pub warm_start: bool,
}

impl<T: Scalar> BacktestConfig<T> {
    pub fn new(spec: StrategySpec<T>) -> Self {
        Self { window: DEFAULT_WINDOW, spec, initial_price: T::one(), warm_start: true }
    }
}

/// Daily series of one strategy (or of the benchmark).
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult<T> {
    pub label: String,
    pub tickers: Vec<String>,
    pub n_classes: usize,
    pub initial_price: T,
    pub dates: Vec<NaiveDate>,
    pub solves: Vec<DailySolve<T>>,
    /// `R^(p)(t) = sum w(t) r(t)`.
    pub returns: Vec<T>,
    /// `S0 exp(sum_{s <= t} R^(p)(s))`.
    pub prices: Vec<T>,
    /// Attribution of each day's weights against the benchmark, using the
    /// expected returns the day was optimized with.
    pub attribution: Vec<AttributionReport<T>>,
    /// Leading-order error of aggregating the day's realized log-returns
    /// linearly.
    pub decomposition_error: Vec<T>,
    /// Largest constraint violation of each optimized day; `None` on
    /// fallback days, which are not audited.
    pub audit_violation: Vec<Option<T>>,
    pub fallback_days: usize,
    pub no_solution_rate: T,
}

impl<T: Scalar> BacktestResult<T> {
    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn weights(&self, day: usize) -> &WeightVector<T> {
        &self.solves[day].weights
    }

    /// Largest audited violation over all optimized days.
    pub fn max_audit_violation(&self) -> T {
        self.audit_violation.iter().flatten().copied().fold(T::zero(), T::max)
    }

    pub fn fallback_flags(&self) -> Vec<bool> {
        self.solves.iter().map(DailySolve::is_fallback).collect()
    }

    /// `date,<ticker...>`, one row per evaluated day.
    pub fn write_weights_csv<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(std::iter::once("date".to_string()).chain(self.tickers.iter().cloned()))?;
        for (d, s) in self.dates.iter().zip(&self.solves) {
            let mut rec = vec![d.format(DATE_FORMAT).to_string()];
            rec.extend(s.weights.as_slice().iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `date,log_return,price,fallback,objective`.
    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "log_return", "price", "fallback", "objective"])?;
        for t in 0..self.n_days() {
            let s = &self.solves[t];
            w.write_record([
                self.dates[t].format(DATE_FORMAT).to_string(),
                self.returns[t].to_string(),
                self.prices[t].to_string(),
                u8::from(s.is_fallback()).to_string(),
                s.objective().map(|o| o.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// `date`, the attribution columns, then `decomposition_error`.
    pub fn write_attribution_csv<W: Write>(&self, out: W) -> Result<(), BacktestError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(AttributionReport::<T>::csv_header(self.n_classes));
        header.push("decomposition_error".into());
        w.write_record(&header)?;
        for t in 0..self.n_days() {
            let mut rec = vec![self.dates[t].format(DATE_FORMAT).to_string()];
            rec.extend(self.attribution[t].csv_fields());
            rec.push(self.decomposition_error[t].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn dot<T: Scalar>(w: &[T], r: &[T]) -> T {
    w.iter().zip(r).map(|(&a, &b)| a * b).sum()
}

fn cumulative_prices<T: Scalar>(initial: T, returns: &[T]) -> Vec<T> {
    let mut acc = T::zero();
    returns
        .iter()
        .map(|&r| {
            acc = acc + r;
            initial * acc.exp()
        })
        .collect()
}

/// Walks `returns` from row `window` to the end. Day `t` is optimized on rows
/// `[t - window, t)` and earns row `t`; infeasible days keep the previous
/// weights, starting from the benchmark.
pub fn run_backtest<T: Scalar>(
    returns: &ReturnPanel<T>,
    partition: &ClassPartition,
    config: &BacktestConfig<T>,
) -> Result<BacktestResult<T>, BacktestError> {
    let window = config.window;
    if window < 2 {
        return Err(BacktestError::WindowTooSmall(window));
    }
    if returns.n_days() <= window {
        return Err(BacktestError::InsufficientData { window, rows: returns.n_days() });
    }
    if partition.n_assets() != returns.n_assets() {
        return Err(BacktestError::PartitionMismatch { partition: partition.n_assets(), returns: returns.n_assets() });
    }
    let benchmark = equi_weight_benchmark::<T>(partition);
    let days = returns.n_days() - window;
    let mut out = BacktestResult {
        label: format!("{}_{}", config.spec.id, alpha_tag(config.spec.alpha)),
        tickers: returns.tickers().to_vec(),
        n_classes: partition.n_classes(),
        initial_price: config.initial_price,
        dates: returns.dates()[window..].to_vec(),
        solves: Vec::with_capacity(days),
        returns: Vec::with_capacity(days),
        prices: Vec::new(),
        attribution: Vec::with_capacity(days),
        decomposition_error: Vec::with_capacity(days),
        audit_violation: Vec::with_capacity(days),
        fallback_days: 0,
        no_solution_rate: T::zero(),
    };
    let mut warm = WarmStart::new();
    let mut previous = benchmark.clone();
    for t in window..returns.n_days() {
        let start = t - window;
        let scenarios = returns.scenarios(start, t);
        let mu = ExpectedReturns::new(scenarios.column_means())?;
        let mut day = if config.warm_start {
            solve_day_warm(&config.spec, &scenarios, &benchmark, partition, &mu, &previous, &mut warm, start)?
        } else {
            solve_day(&config.spec, &scenarios, &benchmark, partition, &mu, &previous)?
        };
        day.date = Some(returns.dates()[t]);
        let r = returns.row(t);
        out.returns.push(dot(day.weights.as_slice(), r));
        out.attribution.push(attribute(&day.weights, &benchmark, partition, &mu)?);
        out.decomposition_error.push(log_return_decomposition_error(&day.weights, &ExpectedReturns::new(r.to_vec())?));
        let audit = verify_constraints(&config.spec, &day, &benchmark, partition, &mu)?;
        out.audit_violation.push(audit.audited.then_some(audit.max_violation));
        if day.is_fallback() {
            out.fallback_days += 1;
        }
        previous = day.weights.clone();
        out.solves.push(day);
    }
    out.prices = cumulative_prices(config.initial_price, &out.returns);
    out.no_solution_rate = T::from_count(out.fallback_days) / T::from_count(days);
    Ok(out)
}

/// Daily rebalanced equal weights over every row of `returns`. Attribution is
/// evaluated with each day's realized returns and is identically zero.
pub fn benchmark_series<T: Scalar>(
    returns: &ReturnPanel<T>,
    partition: &ClassPartition,
    initial_price: T,
) -> Result<BacktestResult<T>, BacktestError> {
    if partition.n_assets() != returns.n_assets() {
        return Err(BacktestError::PartitionMismatch { partition: partition.n_assets(), returns: returns.n_assets() });
    }
    let benchmark = equi_weight_benchmark::<T>(partition);
    let mut out = BacktestResult {
        label: "benchmark".into(),
        tickers: returns.tickers().to_vec(),
        n_classes: partition.n_classes(),
        initial_price,
        dates: returns.dates().to_vec(),
        solves: Vec::with_capacity(returns.n_days()),
        returns: Vec::with_capacity(returns.n_days()),
        prices: Vec::new(),
        attribution: Vec::with_capacity(returns.n_days()),
        decomposition_error: Vec::with_capacity(returns.n_days()),
        audit_violation: Vec::with_capacity(returns.n_days()),
        fallback_days: 0,
        no_solution_rate: T::zero(),
    };
    for t in 0..returns.n_days() {
        let r = ExpectedReturns::new(returns.row(t).to_vec())?;
        out.returns.push(dot(benchmark.as_slice(), r.as_slice()));
        out.attribution.push(attribute(&benchmark, &benchmark, partition, &r)?);
        out.decomposition_error.push(log_return_decomposition_error(&benchmark, &r));
        out.audit_violation.push(None);
        out.solves.push(DailySolve {
            date: Some(returns.dates()[t]),
            status: DayStatus::Optimal,
            weights: benchmark.clone(),
            stage_count: 0,
            stage_status: Vec::new(),
            stage_objectives: Vec::new(),
            iterations: 0,
        });
    }
    out.prices = cumulative_prices(initial_price, &out.returns);
    Ok(out)
}

/// `0.95 -> "95"`, `0.9 -> "90"`, `0.975 -> "975"`: the digits after the decimal point, at least two.
pub fn alpha_tag<T: Scalar>(alpha: T) -> String {
    let s = format!("{}", alpha.to_f64_lossy());
    s.split_once('.').map_or(s.clone(), |(_, frac)| format!("{frac:0<2}"))
}
