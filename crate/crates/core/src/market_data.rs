//! Price ingestion, log-returns, class partitions, benchmark weights,
//! risk-free rates and synthetic panels.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::WeightVector;
use crate::cvar::ScenarioMatrix;
use crate::matrix::Matrix;
use crate::Scalar;

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Trading days per year used to turn annual yields into daily rates.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice { ticker: String, date: NaiveDate, value: f64 },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("dates not strictly increasing at {0}")]
    UnorderedDates(NaiveDate),
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("need at least {required} rows, got {actual}")]
    TooFewRows { required: usize, actual: usize },
    #[error("need at least one asset")]
    NoAssets,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value for {ticker} on {date}")]
    NonFinite { ticker: String, date: NaiveDate },
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("no risk-free rate for {0}")]
    MissingRiskFree(NaiveDate),
    #[error("invalid synthetic panel request: {0}")]
    InvalidSynth(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MarketDataError + '_ {
    move |source| MarketDataError::Io { path: path.to_path_buf(), source }
}

/// Daily closes of `N` assets over `T` dates.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel<T = f64> {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    closes: Matrix<T>,
}

impl<T: Scalar> PricePanel<T> {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, closes: Matrix<T>) -> Result<Self, MarketDataError> {
        if tickers.is_empty() {
            return Err(MarketDataError::NoAssets);
        }
        if closes.rows() != dates.len() || closes.cols() != tickers.len() {
            return Err(MarketDataError::Shape(format!(
                "{} dates x {} tickers vs {}x{} prices",
                dates.len(),
                tickers.len(),
                closes.rows(),
                closes.cols()
            )));
        }
        if dates.len() < 2 {
            return Err(MarketDataError::TooFewRows { required: 2, actual: dates.len() });
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(MarketDataError::UnorderedDates(w[1]));
            }
        }
        for (t, row) in closes.row_iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                if !p.is_finite() {
                    return Err(MarketDataError::NonFinite { ticker: tickers[a].clone(), date: dates[t] });
                }
                if p <= T::zero() {
                    return Err(MarketDataError::NonPositivePrice {
                        ticker: tickers[a].clone(),
                        date: dates[t],
                        value: p.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self { dates, tickers, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn closes(&self) -> &Matrix<T> {
        &self.closes
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    /// Writes `date,<ticker1>,...` with one row per date.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header)?;
        for (t, row) in self.closes.row_iter().enumerate() {
            let mut rec = vec![self.dates[t].format(DATE_FORMAT).to_string()];
            rec.extend(row.iter().map(|p| p.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

/// Loads a price CSV whose header names a date column and ticker columns.
///
/// `ticker_columns = None` takes every column except the date column. Rows
/// may come in any order; they are sorted by date and duplicates rejected.
pub fn load_price_csv<T: Scalar>(
    path: &Path,
    date_column: &str,
    ticker_columns: Option<&[String]>,
) -> Result<PricePanel<T>, MarketDataError> {
    let file = File::open(path).map_err(io_err(path))?;
    load_price_reader(file, path, date_column, ticker_columns)
}

pub fn load_price_reader<T: Scalar, R: Read>(
    input: R,
    path: &Path,
    date_column: &str,
    ticker_columns: Option<&[String]>,
) -> Result<PricePanel<T>, MarketDataError> {
    let parse_err = |line: u64, message: String| MarketDataError::Parse { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let date_idx = find(date_column)?;
    let tickers: Vec<String> = match ticker_columns {
        Some(cols) => cols.to_vec(),
        None => headers.iter().enumerate().filter(|&(i, _)| i != date_idx).map(|(_, h)| h.to_string()).collect(),
    };
    if tickers.is_empty() {
        return Err(MarketDataError::NoAssets);
    }
    let idx: Vec<usize> = tickers.iter().map(|t| find(t)).collect::<Result<_, _>>()?;

    let mut rows: Vec<(NaiveDate, Vec<T>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw_date = rec.get(date_idx).unwrap_or("");
        let date = parse_date(raw_date).ok_or_else(|| parse_err(line, format!("unparseable date {raw_date:?}")))?;
        let mut prices = Vec::with_capacity(idx.len());
        for (k, &c) in idx.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("unparseable price {cell:?} for {}", tickers[k])))?;
            if !(v > 0.0) {
                return Err(MarketDataError::NonPositivePrice { ticker: tickers[k].clone(), date, value: v });
            }
            prices.push(T::from_f64(v).ok_or_else(|| parse_err(line, format!("price {v} not representable")))?);
        }
        rows.push((date, prices));
    }
    rows.sort_by_key(|(d, _)| *d);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(MarketDataError::DuplicateDate(w[0].0));
        }
    }
    let dates: Vec<NaiveDate> = rows.iter().map(|(d, _)| *d).collect();
    let values: Vec<Vec<T>> = rows.into_iter().map(|(_, p)| p).collect();
    let closes = if values.is_empty() {
        Matrix::filled(0, tickers.len(), T::zero())
    } else {
        Matrix::from_rows(&values).expect("rows have one cell per ticker")
    };
    PricePanel::new(dates, tickers, closes)
}

/// Per-day log-returns; row `t` is `ln(S(t+1) / S(t))` dated at `t+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel<T = f64> {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    returns: Matrix<T>,
}

impl<T: Scalar> ReturnPanel<T> {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: Matrix<T>) -> Result<Self, MarketDataError> {
        if tickers.is_empty() {
            return Err(MarketDataError::NoAssets);
        }
        if returns.rows() != dates.len() || returns.cols() != tickers.len() {
            return Err(MarketDataError::Shape("returns do not match dates x tickers".into()));
        }
        for (t, row) in returns.row_iter().enumerate() {
            if let Some(a) = row.iter().position(|x| !x.is_finite()) {
                return Err(MarketDataError::NonFinite { ticker: tickers[a].clone(), date: dates[t] });
            }
        }
        Ok(Self { dates, tickers, returns })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn returns(&self) -> &Matrix<T> {
        &self.returns
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn row(&self, t: usize) -> &[T] {
        self.returns.row(t)
    }

    /// Rows `[start, end)` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
            tickers: self.tickers.clone(),
            returns: self.returns.slice_rows(start, end),
        }
    }

    /// Rows `[start, end)` as an equally weighted scenario set.
    pub fn scenarios(&self, start: usize, end: usize) -> ScenarioMatrix<T> {
        ScenarioMatrix::new(self.returns.slice_rows(start, end)).expect("validated finite, non-empty window")
    }

    /// Inverse of [`to_log_returns`]: prices from the first row's closes.
    pub fn reconstruct_prices(&self, first: &[T]) -> Matrix<T> {
        let n = self.n_assets();
        let mut out = Matrix::filled(self.n_days() + 1, n, T::zero());
        let mut acc = vec![T::zero(); n];
        for (a, &p) in first.iter().enumerate() {
            out.set(0, a, p);
        }
        for (t, row) in self.returns.row_iter().enumerate() {
            for a in 0..n {
                acc[a] = acc[a] + row[a];
                out.set(t + 1, a, first[a] * acc[a].exp());
            }
        }
        out
    }
}

/// `r(t) = ln(S(t) / S(t-1))` for every asset.
pub fn to_log_returns<T: Scalar>(panel: &PricePanel<T>) -> Result<ReturnPanel<T>, MarketDataError> {
    let t = panel.n_days();
    if t < 2 {
        return Err(MarketDataError::TooFewRows { required: 2, actual: t });
    }
    let n = panel.n_assets();
    let c = panel.closes();
    let mut data = Vec::with_capacity((t - 1) * n);
    for r in 1..t {
        for a in 0..n {
            data.push((c.get(r, a) / c.get(r - 1, a)).ln());
        }
    }
    let returns = Matrix::from_row_major(t - 1, n, data).expect("sized above");
    ReturnPanel::new(panel.dates()[1..].to_vec(), panel.tickers().to_vec(), returns)
}

/// Assignment of every asset to exactly one non-empty class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    tickers: Vec<String>,
    class_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl ClassPartition {
    /// `lists[i]` holds the tickers of class `i`; assets are indexed by their
    /// position in `tickers`.
    pub fn from_class_lists(tickers: &[String], lists: &[Vec<String>]) -> Result<Self, MarketDataError> {
        let pos: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        if pos.len() != tickers.len() {
            return Err(MarketDataError::Partition("duplicate ticker in panel".into()));
        }
        let mut class_of = vec![usize::MAX; tickers.len()];
        let mut members = Vec::with_capacity(lists.len());
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(MarketDataError::Partition(format!("class {} is empty", i + 1)));
            }
            let mut m = Vec::with_capacity(list.len());
            for t in list {
                let &a = pos
                    .get(t.as_str())
                    .ok_or_else(|| MarketDataError::Partition(format!("ticker {t} not in price panel")))?;
                if class_of[a] != usize::MAX {
                    return Err(MarketDataError::Partition(format!("ticker {t} assigned twice")));
                }
                class_of[a] = i;
                m.push(a);
            }
            m.sort_unstable();
            members.push(m);
        }
        if let Some(a) = class_of.iter().position(|&c| c == usize::MAX) {
            return Err(MarketDataError::Partition(format!("ticker {} has no class", tickers[a])));
        }
        Ok(Self { tickers: tickers.to_vec(), class_of, members })
    }

    /// Contiguous, near-equal classes: the first `N mod M` classes get one
    /// extra asset.
    pub fn even_split(tickers: &[String], n_classes: usize) -> Result<Self, MarketDataError> {
        let m = n_classes.clamp(1, tickers.len().max(1));
        let base = tickers.len() / m;
        let extra = tickers.len() % m;
        let mut lists = Vec::with_capacity(m);
        let mut start = 0;
        for i in 0..m {
            let size = base + usize::from(i < extra);
            lists.push(tickers[start..start + size].to_vec());
            start += size;
        }
        Self::from_class_lists(tickers, &lists)
    }

    pub fn n_assets(&self) -> usize {
        self.class_of.len()
    }

    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn class_of(&self, asset: usize) -> usize {
        self.class_of[asset]
    }

    pub fn members(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Class lists keyed `"1".."M"`, the on-disk layout.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<usize, Vec<&str>> = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| (i + 1, m.iter().map(|&a| self.tickers[a].as_str()).collect()))
            .collect();
        let obj: serde_json::Map<String, serde_json::Value> =
            map.into_iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
        serde_json::to_string_pretty(&obj).expect("plain strings serialize")
    }

    /// Parses `{"1": ["UNH", ...], "2": [...]}` against the panel's tickers.
    pub fn from_json(text: &str, tickers: &[String]) -> Result<Self, MarketDataError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| MarketDataError::Partition(e.to_string()))?;
        let mut keyed = Vec::with_capacity(raw.len());
        for (k, v) in raw {
            let idx: usize = k
                .trim()
                .parse()
                .map_err(|_| MarketDataError::Partition(format!("class key {k:?} is not a positive integer")))?;
            if idx == 0 {
                return Err(MarketDataError::Partition("class keys start at 1".into()));
            }
            keyed.push((idx, v));
        }
        keyed.sort_by_key(|(k, _)| *k);
        let lists: Vec<Vec<String>> = keyed.into_iter().map(|(_, v)| v).collect();
        Self::from_class_lists(tickers, &lists)
    }

    pub fn load_json(path: &Path, tickers: &[String]) -> Result<Self, MarketDataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, tickers)
    }
}

/// Equally weighted benchmark: `1/N` per asset, `n_i/N` per class.
pub fn equi_weight_benchmark<T: Scalar>(partition: &ClassPartition) -> WeightVector<T> {
    WeightVector::uniform(partition.n_assets())
}

/// Per-day risk-free rates keyed by date.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFreeSeries<T = f64> {
    dates: Vec<NaiveDate>,
    daily_rate: Vec<T>,
}

impl<T: Scalar> RiskFreeSeries<T> {
    pub fn new(dates: Vec<NaiveDate>, daily_rate: Vec<T>) -> Result<Self, MarketDataError> {
        if dates.len() != daily_rate.len() {
            return Err(MarketDataError::Shape("risk-free dates and rates differ in length".into()));
        }
        let mut seen = HashSet::new();
        for (d, r) in dates.iter().zip(&daily_rate) {
            if !seen.insert(*d) {
                return Err(MarketDataError::DuplicateDate(*d));
            }
            if !r.is_finite() {
                return Err(MarketDataError::NonFinite { ticker: "risk-free".into(), date: *d });
            }
        }
        Ok(Self { dates, daily_rate })
    }

    /// Annual percent yields converted with `y / (100 * 252)`.
    pub fn from_annual_percent(dates: Vec<NaiveDate>, yields: &[T]) -> Result<Self, MarketDataError> {
        let k = T::lit(100.0 * TRADING_DAYS_PER_YEAR);
        Self::new(dates, yields.iter().map(|&y| y / k).collect())
    }

    /// The same annual percent yield on every date.
    pub fn constant_annual_percent(dates: &[NaiveDate], percent: T) -> Self {
        let r = percent / T::lit(100.0 * TRADING_DAYS_PER_YEAR);
        Self { dates: dates.to_vec(), daily_rate: vec![r; dates.len()] }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn daily_rate(&self) -> &[T] {
        &self.daily_rate
    }

    /// Rates on exactly `dates`; every date must be present.
    pub fn aligned(&self, dates: &[NaiveDate]) -> Result<Vec<T>, MarketDataError> {
        let by_date: HashMap<NaiveDate, T> = self.dates.iter().copied().zip(self.daily_rate.iter().copied()).collect();
        dates
            .iter()
            .map(|d| by_date.get(d).copied().ok_or(MarketDataError::MissingRiskFree(*d)))
            .collect()
    }
}

/// Loads `date,annual_yield_percent`.
pub fn load_riskfree_csv<T: Scalar>(path: &Path) -> Result<RiskFreeSeries<T>, MarketDataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let parse_err = |line: u64, message: String| MarketDataError::Parse { path: path.to_path_buf(), line, message };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
    };
    let (di, yi) = (col("date")?, col("annual_yield_percent")?);
    let mut dates = Vec::new();
    let mut yields = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw = rec.get(di).unwrap_or("");
        dates.push(parse_date(raw).ok_or_else(|| parse_err(line, format!("unparseable date {raw:?}")))?);
        let cell = rec.get(yi).unwrap_or("");
        let y: f64 = cell.parse().map_err(|_| parse_err(line, format!("unparseable yield {cell:?}")))?;
        yields.push(T::from_f64(y).ok_or_else(|| parse_err(line, "yield not representable".into()))?);
    }
    RiskFreeSeries::from_annual_percent(dates, &yields)
}

/// Per-asset drift and volatility of a synthetic geometric random walk, with
/// a common market factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Per-day log drift of each asset.
    pub drift: Vec<f64>,
    /// Per-day log volatility of each asset.
    pub volatility: Vec<f64>,
    /// Share of each asset's variance explained by the market factor, in [0, 1].
    pub market_share: f64,
    pub initial_price: f64,
    pub start_date: NaiveDate,
}

impl SynthSpec {
    /// Drifts spread over roughly 2% to 14% a year and volatilities over 18%
    /// to 40% a year, half of the variance common.
    pub fn default_for(n_assets: usize) -> Self {
        let spread = |i: usize| if n_assets > 1 { i as f64 / (n_assets - 1) as f64 } else { 0.5 };
        let drift = (0..n_assets).map(|i| (0.02 + 0.12 * spread((i * 7) % n_assets)) / 252.0).collect();
        let volatility = (0..n_assets).map(|i| (0.18 + 0.22 * spread((i * 11) % n_assets)) / 252f64.sqrt()).collect();
        Self {
            drift,
            volatility,
            market_share: 0.5,
            initial_price: 100.0,
            start_date: NaiveDate::from_ymd_opt(2008, 3, 19).expect("valid date"),
        }
    }

    /// Zero drift and zero volatility: every price stays at `initial_price`.
    pub fn flat(n_assets: usize) -> Self {
        Self { drift: vec![0.0; n_assets], volatility: vec![0.0; n_assets], ..Self::default_for(n_assets) }
    }
}

/// Weekdays starting at `start` (moved forward to a weekday if needed).
pub fn business_days(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.checked_add_days(Days::new(1)).expect("date in range");
    }
    out
}

/// Tickers used for synthetic panels: the 29 test-portfolio names in class
/// order, then generated names.
pub fn synthetic_tickers(n_assets: usize) -> Vec<String> {
    let named = djia::TABLE2_CLASSES.iter().flat_map(|c| c.iter());
    named
        .map(|t| t.to_string())
        .chain((djia::TABLE2_CLASSES.iter().map(|c| c.len()).sum::<usize>()..).map(|i| format!("S{i:03}")))
        .take(n_assets)
        .collect()
}

/// Deterministic geometric random walk:
/// `ln S(t) - ln S(t-1) = drift + vol (sqrt(share) Z_m + sqrt(1 - share) Z_a)`.
pub fn synthesize_panel<T: Scalar>(
    n_assets: usize,
    n_days: usize,
    seed: u64,
    spec: &SynthSpec,
) -> Result<PricePanel<T>, MarketDataError> {
    if n_assets == 0 {
        return Err(MarketDataError::InvalidSynth("n_assets must be at least 1".into()));
    }
    if n_days < 2 {
        return Err(MarketDataError::InvalidSynth("n_days must be at least 2".into()));
    }
    if spec.drift.len() != n_assets || spec.volatility.len() != n_assets {
        return Err(MarketDataError::InvalidSynth("drift/volatility length differs from n_assets".into()));
    }
    if !(0.0..=1.0).contains(&spec.market_share) || spec.volatility.iter().any(|&v| v < 0.0) {
        return Err(MarketDataError::InvalidSynth("market share or volatility out of range".into()));
    }
    if !(spec.initial_price > 0.0) {
        return Err(MarketDataError::InvalidSynth("initial price must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let common = spec.market_share.sqrt();
    let idio = (1.0 - spec.market_share).sqrt();
    let mut log_p = vec![spec.initial_price.ln(); n_assets];
    let mut data = Vec::with_capacity(n_days * n_assets);
    for t in 0..n_days {
        if t > 0 {
            let zm: f64 = StandardNormal.sample(&mut rng);
            for a in 0..n_assets {
                let za: f64 = StandardNormal.sample(&mut rng);
                log_p[a] += spec.drift[a] + spec.volatility[a] * (common * zm + idio * za);
            }
        }
        for &lp in &log_p {
            data.push(T::lit(lp.exp()));
        }
    }
    let closes = Matrix::from_row_major(n_days, n_assets, data).expect("sized above");
    PricePanel::new(business_days(spec.start_date, n_days), synthetic_tickers(n_assets), closes)
}

/// Composition fixtures of the 30-stock index the test portfolio is drawn from.
pub mod djia {
    use super::*;

    /// Ticker, company, index weight (%) as of 2021-02-01.
    pub const TABLE1: [(&str, &str, f64); 30] = [
        ("UNH", "UnitedHealth", 7.27),
        ("GS", "Goldman Sachs", 5.98),
        ("HD", "Home Depot", 5.88),
        ("AMGN", "Amgen", 5.23),
        ("MSFT", "Microsoft", 5.21),
        ("CRM", "salesforce.com", 4.97),
        ("MCD", "McDonald's", 4.52),
        ("V", "Visa", 4.31),
        ("BA", "Boeing", 4.26),
        ("HON", "Honeywell Int'l.", 4.25),
        ("CAT", "Caterpillar", 4.02),
        ("MMM", "3M", 3.8),
        ("DIS", "Walt Disney", 3.72),
        ("JNJ", "Johnson & Johnson", 3.54),
        ("WMT", "Walmart", 3.03),
        ("TRV", "Travelers Cos.", 3.01),
        ("NKE", "NIKE", 2.96),
        ("AAPL", "Apple", 2.92),
        ("JPM", "JPMorgan Chase", 2.82),
        ("PG", "Procter & Gamble", 2.81),
        ("IBM", "Int'l Business Mach.", 2.63),
        ("AXP", "American Express", 2.55),
        ("CVX", "Chevron", 1.88),
        ("MRK", "Merck & Co.", 1.68),
        ("INTC", "Intel", 1.23),
        ("VZ", "Verizon Commun.", 1.18),
        ("DOW", "Dow", 1.15),
        ("WBA", "Walgreens Boots All.", 1.06),
        ("KO", "Coca-Cola", 1.06),
        ("CSCO", "Cisco Systems", 0.99),
    ];

    /// The six classes of the 29-stock test portfolio (DOW excluded).
    pub const TABLE2_CLASSES: [&[&str]; 6] = [
        &["UNH", "GS", "HD", "AMGN", "MSFT"],
        &["CRM", "MCD", "V", "BA", "HON"],
        &["CAT", "MMM", "DIS", "JNJ", "WMT"],
        &["TRV", "NKE", "AAPL", "JPM", "PG"],
        &["IBM", "AXP", "CVX", "MRK", "INTC"],
        &["VZ", "WBA", "KO", "CSCO"],
    ];

    /// Class weights in the index (%), as tabulated.
    pub const TABLE2_CLASS_WEIGHTS: [f64; 6] = [29.59, 22.35, 18.13, 14.52, 9.97, 4.29];

    pub fn tickers() -> Vec<String> {
        TABLE2_CLASSES.iter().flat_map(|c| c.iter().map(|t| t.to_string())).collect()
    }

    pub fn partition() -> ClassPartition {
        let lists: Vec<Vec<String>> =
            TABLE2_CLASSES.iter().map(|c| c.iter().map(|t| t.to_string()).collect()).collect();
        ClassPartition::from_class_lists(&tickers(), &lists).expect("fixture is a valid partition")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn load(text: &str) -> Result<PricePanel<f64>, MarketDataError> {
        load_price_reader(text.as_bytes(), Path::new("mem.csv"), "date", None)
    }

    #[test]
    fn minimal_csv() {
        let p = load("date,X\n2020-01-01,1.0\n2020-01-02,2.0\n2020-01-03,4.0\n").unwrap();
        assert_eq!((p.n_days(), p.n_assets()), (3, 1));
        assert_eq!(p.closes().column(0), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn zero_price_rejected() {
        let e = load("date,X\n2020-01-01,1.0\n2020-01-02,0.0\n").unwrap_err();
        assert!(matches!(e, MarketDataError::NonPositivePrice { .. }), "{e}");
        assert!(e.to_string().contains("non-positive price"));
    }

    #[test]
    fn out_of_order_rows_sorted() {
        let p = load("date,X,Y\n2020-01-03,4,40\n2020-01-01,1,10\n2020-01-02,2,20\n").unwrap();
        assert_eq!(p.dates(), &[d("2020-01-01"), d("2020-01-02"), d("2020-01-03")]);
        assert_eq!(p.closes().column(1), vec![10.0, 20.0, 40.0]);
    }

    #[test]
    fn duplicate_and_garbage_rejected() {
        assert!(matches!(
            load("date,X\n2020-01-01,1\n2020-01-01,2\n"),
            Err(MarketDataError::DuplicateDate(_))
        ));
        assert!(matches!(load("date,X\n2020-01-01,abc\n2020-01-02,2\n"), Err(MarketDataError::Parse { .. })));
        assert!(matches!(
            load_price_csv::<f64>(Path::new("/nonexistent/prices.csv"), "date", None),
            Err(MarketDataError::Io { .. })
        ));
        assert!(matches!(
            load_price_reader::<f64, _>("day,X\n".as_bytes(), Path::new("m"), "date", None),
            Err(MarketDataError::MissingColumn(_))
        ));
    }

    #[test]
    fn explicit_ticker_subset() {
        let p: PricePanel = load_price_reader(
            "date,X,Y\n2020-01-01,1,10\n2020-01-02,2,20\n".as_bytes(),
            Path::new("m"),
            "date",
            Some(&["Y".to_string()]),
        )
        .unwrap();
        assert_eq!(p.tickers(), &["Y".to_string()]);
    }

    #[test]
    fn log_return_examples() {
        let e = std::f64::consts::E;
        let p = PricePanel::new(
            business_days(d("2020-01-01"), 3),
            vec!["X".into()],
            Matrix::from_rows(&[vec![1.0], vec![e], vec![e * e]]).unwrap(),
        )
        .unwrap();
        let r = to_log_returns(&p).unwrap();
        assert!((r.row(0)[0] - 1.0).abs() < 1e-15 && (r.row(1)[0] - 1.0).abs() < 1e-15);

        let flat = PricePanel::new(
            business_days(d("2020-01-01"), 3),
            vec!["X".into()],
            Matrix::from_rows(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(to_log_returns(&flat).unwrap().returns().column(0), vec![0.0, 0.0]);

        let two = PricePanel::new(
            business_days(d("2020-01-01"), 2),
            vec!["X".into()],
            Matrix::from_rows(&[vec![100.0f64], vec![102.0]]).unwrap(),
        )
        .unwrap();
        let r = to_log_returns(&two).unwrap();
        // ln(1.02) = 0.0198026272961797...
        assert!((r.row(0)[0] - 0.019_802_627_296_179_7).abs() < 1e-15);
        assert_eq!(r.dates(), &two.dates()[1..]);
    }

    #[test]
    fn single_row_panel_rejected() {
        let e = PricePanel::new(vec![d("2020-01-01")], vec!["X".into()], Matrix::from_rows(&[vec![1.0]]).unwrap());
        assert!(matches!(e, Err(MarketDataError::TooFewRows { .. })));
    }

    #[test]
    fn equi_weights() {
        let part = djia::partition();
        let w: WeightVector<f64> = equi_weight_benchmark(&part);
        assert_eq!(w.len(), 29);
        assert!((w.as_slice()[0] - 1.0 / 29.0).abs() < 1e-15);
        let cw = w.class_weights(&part);
        let expected = [5.0, 5.0, 5.0, 5.0, 5.0, 4.0].map(|n: f64| n / 29.0);
        for (a, b) in cw.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let single = ClassPartition::even_split(&["X".to_string()], 1).unwrap();
        assert_eq!(equi_weight_benchmark::<f64>(&single).as_slice(), &[1.0]);
    }

    #[test]
    fn table_fixtures_are_consistent() {
        assert_eq!(djia::partition().class_sizes(), vec![5, 5, 5, 5, 5, 4]);
        let weight: HashMap<&str, f64> = djia::TABLE1.iter().map(|&(t, _, w)| (t, w)).collect();
        for (class, &pct) in djia::TABLE2_CLASSES.iter().zip(&djia::TABLE2_CLASS_WEIGHTS) {
            let s: f64 = class.iter().map(|t| weight[t]).sum();
            // Tabulated class totals come from unrounded index weights.
            assert!((s - pct).abs() < 0.05, "{class:?}: {s} vs {pct}");
        }
    }

    #[test]
    fn partition_json_round_trip_and_errors() {
        let part = djia::partition();
        let back = ClassPartition::from_json(&part.to_json(), &djia::tickers()).unwrap();
        assert_eq!(back, part);
        let t = vec!["A".to_string(), "B".to_string()];
        assert!(ClassPartition::from_json(r#"{"1": ["A"]}"#, &t).is_err());
        assert!(ClassPartition::from_json(r#"{"1": ["A", "B"], "2": []}"#, &t).is_err());
        assert!(ClassPartition::from_json(r#"{"1": ["A", "B", "A"]}"#, &t).is_err());
        assert!(ClassPartition::from_json(r#"{"x": ["A", "B"]}"#, &t).is_err());
        assert!(ClassPartition::from_json(r#"{"2": ["A"], "10": ["B"]}"#, &t).is_ok());
    }

    #[test]
    fn even_split_matches_table2_shape() {
        let t = synthetic_tickers(29);
        let p = ClassPartition::even_split(&t, 6).unwrap();
        assert_eq!(p, djia::partition());
        assert_eq!(ClassPartition::even_split(&synthetic_tickers(3), 6).unwrap().n_classes(), 3);
    }

    #[test]
    fn riskfree_alignment() {
        let dates = business_days(d("2020-01-01"), 3);
        let rf = RiskFreeSeries::<f64>::from_annual_percent(dates.clone(), &[2.52, 2.52, 5.04]).unwrap();
        assert!((rf.daily_rate()[0] - 1e-4).abs() < 1e-18);
        assert_eq!(rf.aligned(&dates[1..]).unwrap().len(), 2);
        let missing = d("2021-01-01");
        assert!(matches!(rf.aligned(&[missing]), Err(MarketDataError::MissingRiskFree(_))));
    }

    #[test]
    fn synth_examples() {
        let flat: PricePanel = synthesize_panel(1, 2, 0, &SynthSpec::flat(1)).unwrap();
        assert_eq!(flat.closes().get(0, 0), flat.closes().get(1, 0));
        let spec = SynthSpec::default_for(4);
        let a: PricePanel = synthesize_panel(4, 50, 7, &spec).unwrap();
        let b: PricePanel = synthesize_panel(4, 50, 7, &spec).unwrap();
        assert_eq!(a, b);
        let c: PricePanel = synthesize_panel(4, 50, 8, &spec).unwrap();
        assert_ne!(a, c);
        assert!(synthesize_panel::<f64>(0, 5, 0, &SynthSpec::flat(0)).is_err());
        assert!(synthesize_panel::<f64>(1, 1, 0, &SynthSpec::flat(1)).is_err());
    }

    #[test]
    fn business_days_skip_weekends() {
        let days = business_days(d("2021-01-29"), 3); // Friday
        assert_eq!(days, vec![d("2021-01-29"), d("2021-02-01"), d("2021-02-02")]);
    }
}
