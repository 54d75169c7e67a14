//! Orchestration behind the `attrib-etl` binary: synthetic data, backtest
//! grids, report tables and reproducible run manifests.

pub mod stats;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use attrib_etl::backtest::{alpha_tag, benchmark_series, run_backtest, BacktestConfig, BacktestError, BacktestResult};
use attrib_etl::market_data::{
    load_price_csv, load_riskfree_csv, synthesize_panel, to_log_returns, ClassPartition, MarketDataError, SynthSpec,
    DATE_FORMAT,
};
use attrib_etl::risk_metrics::{moving_window_metrics, risk_summary, RiskError, RiskSummary};
use attrib_etl::strategies::{Bound, ConstraintBounds, StrategyError, StrategyId, StrategySpec};
use attrib_etl::PricePanel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::stats::{stats_rows, AttribStatsRow};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or missing input; exit code 2.
    #[error("{0}")]
    Input(String),
    /// Anything else; exit code 4.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::UnknownStrategy(_) | StrategyError::InvalidAlpha(_) | StrategyError::InvalidBounds { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::InsufficientData { .. }
            | BacktestError::WindowTooSmall(_)
            | BacktestError::PartitionMismatch { .. } => CliError::Input(e.to_string()),
            BacktestError::Strategy(s) => s.into(),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn io_ctx(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_ctx(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Everything `backtest` needs; echoed verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestArgs {
    pub prices: PathBuf,
    pub riskfree: Option<PathBuf>,
    pub partition: PathBuf,
    pub strategies: Vec<StrategyId>,
    pub alphas: Vec<f64>,
    pub window: usize,
    pub out: PathBuf,
    /// Recorded for provenance; the backtest itself draws no random numbers.
    pub seed: Option<u64>,
    pub aa_min: f64,
    pub se_min: f64,
    pub sebar_min: f64,
    pub initial_price: f64,
    /// Trailing window of the moving risk table, capped at the series length.
    pub moving_window: usize,
    pub rachev_alpha: f64,
    pub rachev_beta: f64,
}

impl BacktestArgs {
    pub fn new(prices: PathBuf, partition: PathBuf, out: PathBuf) -> Self {
        Self {
            prices,
            riskfree: None,
            partition,
            strategies: StrategyId::ALL.to_vec(),
            alphas: vec![0.95, 0.99],
            window: 1008,
            out,
            seed: None,
            aa_min: 0.0,
            se_min: 0.0,
            sebar_min: 0.0,
            initial_price: 1.0,
            moving_window: 1008,
            rachev_alpha: 0.95,
            rachev_beta: 0.95,
        }
    }

    fn specs(&self) -> Result<Vec<StrategySpec<f64>>, CliError> {
        if self.strategies.is_empty() || self.alphas.is_empty() {
            return Err(CliError::Input("need at least one strategy and one alpha".into()));
        }
        let bounds = ConstraintBounds {
            aa: Bound::at_least(self.aa_min),
            se: Bound::at_least(self.se_min),
            se_bar: Bound::at_least(self.sebar_min),
        };
        let mut specs = Vec::new();
        for &id in &self.strategies {
            for &alpha in &self.alphas {
                let spec = StrategySpec::with_bounds(id, alpha, bounds)?;
                let tag = (id, alpha_tag(alpha));
                if specs.iter().any(|s: &StrategySpec<f64>| (s.id, alpha_tag(s.alpha)) == tag) {
                    return Err(CliError::Input(format!("duplicate run {id} at alpha {alpha}")));
                }
                specs.push(spec);
            }
        }
        Ok(specs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn digest(path: &Path, label: String) -> Result<FileDigest, CliError> {
    let data = fs::read(path).map_err(io_ctx(path))?;
    let hash = Sha256::digest(&data);
    let sha256 = hash.iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileDigest { path: label, sha256, bytes: data.len() as u64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub strategy: Option<StrategyId>,
    pub alpha: Option<f64>,
    pub evaluated_days: usize,
    pub fallback_days: usize,
    pub no_solution_rate: f64,
    pub max_audit_violation: f64,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn all_fallback(&self) -> bool {
        self.strategy.is_some() && self.evaluated_days > 0 && self.fallback_days == self.evaluated_days
    }
}

/// Written last into the output directory; enough to re-run the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: BacktestArgs,
    pub inputs: Vec<FileDigest>,
    /// Every emitted file except the manifest, relative to the output directory.
    pub artifacts: Vec<FileDigest>,
    pub runs: Vec<RunRecord>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn all_fallback_runs(&self) -> Vec<&str> {
        self.runs.iter().filter(|r| r.all_fallback()).map(|r| r.label.as_str()).collect()
    }
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    label: &'a str,
    strategy: Option<StrategyId>,
    alpha: Option<f64>,
    window: usize,
    evaluated_days: usize,
    fallback_days: usize,
    no_solution_rate: f64,
    max_audit_violation: f64,
    first_date: String,
    last_date: String,
    final_price: f64,
    risk: &'a RiskSummary<f64>,
}

struct Run {
    spec: Option<StrategySpec<f64>>,
    result: BacktestResult<f64>,
    risk: RiskSummary<f64>,
    seconds: f64,
}

fn staging_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "out".into());
    name.push(".partial");
    out.with_file_name(name)
}

fn prepare_output(out: &Path, force: bool) -> Result<PathBuf, CliError> {
    if out.exists() {
        let non_empty = fs::read_dir(out).map_err(io_ctx(out))?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Input(format!("output directory {} is not empty (use --force)", out.display())));
        }
    }
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(io_ctx(&staging))?;
    }
    fs::create_dir_all(&staging).map_err(io_ctx(&staging))?;
    Ok(staging)
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(io_ctx(dir))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(io_ctx(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            list_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

fn rel_label(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn write_run(dir: &Path, run: &Run, window: usize) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_ctx(dir))?;
    let r = &run.result;
    r.write_weights_csv(create(&dir.join("weights.csv"))?)?;
    r.write_series_csv(create(&dir.join("series.csv"))?)?;
    r.write_attribution_csv(create(&dir.join("attribution.csv"))?)?;
    let summary = RunSummary {
        label: &r.label,
        strategy: run.spec.as_ref().map(|s| s.id),
        alpha: run.spec.as_ref().map(|s| s.alpha),
        window,
        evaluated_days: r.n_days(),
        fallback_days: r.fallback_days,
        no_solution_rate: r.no_solution_rate,
        max_audit_violation: r.max_audit_violation(),
        first_date: r.dates[0].format(DATE_FORMAT).to_string(),
        last_date: r.dates[r.n_days() - 1].format(DATE_FORMAT).to_string(),
        final_price: r.prices[r.n_days() - 1],
        risk: &run.risk,
    };
    let path = dir.join("summary.json");
    let mut f = create(&path)?;
    serde_json::to_writer_pretty(&mut f, &summary).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(f).and_then(|_| f.flush()).map_err(io_ctx(&path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}

pub fn write_attrib_stats<W: Write>(rows: &[AttribStatsRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "quantity",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "pct_negative",
        "pct_zero",
        "pct_positive",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let d = &r.dist;
        let nums = [d.min, d.q1, d.median, d.q3, d.max, d.pct_negative, d.pct_zero, d.pct_positive];
        let rec: Vec<String> =
            [r.label.clone(), r.quantity.to_string()].into_iter().chain(nums.iter().map(|x| x.to_string())).collect();
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))
}

fn write_tables(dir: &Path, runs: &[Run], args: &BacktestArgs, rf: &[f64]) -> Result<(), CliError> {
    let mut risk = csv_writer(&dir.join("risk_table.csv"))?;
    risk.write_record(["label", "strategy", "alpha", "mdd", "sharpe", "rachev", "no_solution_rate"]).map_err(csv_err)?;
    for run in runs {
        let (id, alpha) = match &run.spec {
            Some(s) => (s.id.to_string(), s.alpha.to_string()),
            None => ("benchmark".into(), String::new()),
        };
        risk.write_record([
            run.result.label.clone(),
            id,
            alpha,
            run.risk.mdd.to_string(),
            opt(run.risk.sharpe),
            opt(run.risk.rachev),
            run.result.no_solution_rate.to_string(),
        ])
        .map_err(csv_err)?;
    }
    risk.flush().map_err(|e| CliError::Internal(e.to_string()))?;

    let mut rates = csv_writer(&dir.join("no_solution_rates.csv"))?;
    rates.write_record(["strategy", "alpha", "evaluated_days", "fallback_days", "no_solution_rate"]).map_err(csv_err)?;
    for run in runs {
        if let Some(s) = &run.spec {
            let r = &run.result;
            rates
                .write_record([
                    s.id.to_string(),
                    s.alpha.to_string(),
                    r.n_days().to_string(),
                    r.fallback_days.to_string(),
                    r.no_solution_rate.to_string(),
                ])
                .map_err(csv_err)?;
        }
    }
    rates.flush().map_err(|e| CliError::Internal(e.to_string()))?;

    let mut moving = csv_writer(&dir.join("moving_risk.csv"))?;
    moving.write_record(["date", "label", "mdd", "sharpe", "rachev"]).map_err(csv_err)?;
    for run in runs {
        let r = &run.result;
        let window = args.moving_window.clamp(1, r.n_days());
        let series =
            moving_window_metrics(&r.dates, &r.prices, &r.returns, rf, window, args.rachev_alpha, args.rachev_beta)?;
        for s in series {
            moving
                .write_record([
                    s.end.format(DATE_FORMAT).to_string(),
                    r.label.clone(),
                    s.mdd.to_string(),
                    opt(s.sharpe),
                    opt(s.rachev),
                ])
                .map_err(csv_err)?;
        }
    }
    moving.flush().map_err(|e| CliError::Internal(e.to_string()))?;

    let mut rows = Vec::new();
    for run in runs {
        let a = &run.result.attribution;
        let aa: Vec<f64> = a.iter().map(|x| x.totals.aa).collect();
        let se: Vec<f64> = a.iter().map(|x| x.totals.se).collect();
        let sb: Vec<f64> = a.iter().map(|x| x.totals.se_bar).collect();
        rows.extend(stats_rows(&run.result.label, &aa, &se, &sb));
    }
    write_attrib_stats(&rows, create(&dir.join("attrib_stats.csv"))?)
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Runs every (strategy, alpha) pair plus the benchmark and writes all
/// artifacts into `args.out`. Outputs are staged next to `args.out` and only
/// moved into place once the manifest is written.
pub fn cmd_backtest(args: &BacktestArgs, force: bool, quiet: bool) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let specs = args.specs()?;
    if !(args.initial_price > 0.0 && args.initial_price.is_finite()) {
        return Err(CliError::Input(format!("initial price must be positive, got {}", args.initial_price)));
    }
    for a in [args.rachev_alpha, args.rachev_beta] {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::Input(format!("Rachev level {a} outside (0, 1)")));
        }
    }
    let prices: PricePanel = load_price_csv(&args.prices, "date", None)?;
    let partition = ClassPartition::load_json(&args.partition, prices.tickers())?;
    let returns = to_log_returns(&prices)?;
    if returns.n_days() <= args.window || args.window < 2 {
        return Err(BacktestError::InsufficientData { window: args.window, rows: returns.n_days() }.into());
    }
    let eval_dates = &returns.dates()[args.window..];
    let rf: Vec<f64> = match &args.riskfree {
        Some(p) => load_riskfree_csv::<f64>(p)?.aligned(eval_dates)?,
        None => vec![0.0; eval_dates.len()],
    };
    let mut inputs = vec![
        digest(&args.prices, absolute(&args.prices).display().to_string())?,
        digest(&args.partition, absolute(&args.partition).display().to_string())?,
    ];
    if let Some(p) = &args.riskfree {
        inputs.push(digest(p, absolute(p).display().to_string())?);
    }

    let staging = prepare_output(&args.out, force)?;
    let outcome = (|| {
        let results: Vec<Result<Run, CliError>> = specs
            .par_iter()
            .map(|spec| {
                let t0 = Instant::now();
                let config = BacktestConfig {
                    window: args.window,
                    spec: spec.clone(),
                    initial_price: args.initial_price,
                    warm_start: true,
                };
                let result = run_backtest(&returns, &partition, &config)?;
                let risk = risk_summary(
                    &result.dates,
                    &result.prices,
                    &result.returns,
                    &rf,
                    args.rachev_alpha,
                    args.rachev_beta,
                )?;
                let seconds = t0.elapsed().as_secs_f64();
                if !quiet {
                    eprintln!(
                        "{}: {} days, {} fallback, {:.1}s",
                        result.label,
                        result.n_days(),
                        result.fallback_days,
                        seconds
                    );
                }
                Ok(Run { spec: Some(spec.clone()), result, risk, seconds })
            })
            .collect();
        let mut runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;

        let t0 = Instant::now();
        let bench = benchmark_series(&returns.slice_rows(args.window, returns.n_days()), &partition, args.initial_price)?;
        let risk = risk_summary(&bench.dates, &bench.prices, &bench.returns, &rf, args.rachev_alpha, args.rachev_beta)?;
        runs.push(Run { spec: None, result: bench, risk, seconds: t0.elapsed().as_secs_f64() });

        for run in &runs {
            write_run(&staging.join(&run.result.label), run, args.window)?;
        }
        write_tables(&staging, &runs, args, &rf)?;

        let mut files = Vec::new();
        list_files(&staging, &staging, &mut files)?;
        let artifacts =
            files.iter().map(|rel| digest(&staging.join(rel), rel_label(rel))).collect::<Result<Vec<_>, _>>()?;
        let mut config = args.clone();
        config.prices = absolute(&args.prices);
        config.partition = absolute(&args.partition);
        config.riskfree = args.riskfree.as_deref().map(absolute);
        let manifest = RunManifest {
            tool: "attrib-etl".into(),
            version: VERSION.into(),
            config,
            inputs,
            artifacts,
            runs: runs
                .iter()
                .map(|r| RunRecord {
                    label: r.result.label.clone(),
                    strategy: r.spec.as_ref().map(|s| s.id),
                    alpha: r.spec.as_ref().map(|s| s.alpha),
                    evaluated_days: r.result.n_days(),
                    fallback_days: r.result.fallback_days,
                    no_solution_rate: r.result.no_solution_rate,
                    max_audit_violation: r.result.max_audit_violation(),
                    wall_clock_seconds: r.seconds,
                })
                .collect(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        let path = staging.join(MANIFEST_FILE);
        let mut f = create(&path)?;
        serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(f).and_then(|_| f.flush()).map_err(io_ctx(&path))?;
        Ok(manifest)
    })();

    match outcome {
        Ok(manifest) => {
            if args.out.exists() {
                fs::remove_dir_all(&args.out).map_err(io_ctx(&args.out))?;
            }
            fs::rename(&staging, &args.out).map_err(io_ctx(&args.out))?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

#[derive(Debug)]
pub struct RerunReport {
    pub manifest: RunManifest,
    /// Artifacts whose bytes differ from, or are missing relative to, the
    /// original manifest.
    pub mismatches: Vec<String>,
}

impl RerunReport {
    pub fn identical(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-runs the grid recorded in a manifest into `out` and compares every
/// artifact byte for byte through its digest.
pub fn cmd_rerun(manifest_path: &Path, out: &Path, force: bool, quiet: bool) -> Result<RerunReport, CliError> {
    let original = RunManifest::load(manifest_path)?;
    let mut args = original.config.clone();
    let paths = [Some(&args.prices), Some(&args.partition), args.riskfree.as_ref()];
    for (input, path) in original.inputs.iter().zip(paths.into_iter().flatten()) {
        let now = digest(path, input.path.clone())?;
        if now.sha256 != input.sha256 {
            return Err(CliError::Input(format!("input {} changed since the recorded run", path.display())));
        }
    }
    args.out = out.to_path_buf();
    let manifest = cmd_backtest(&args, force, quiet)?;
    let mut mismatches = Vec::new();
    for a in &original.artifacts {
        match manifest.artifacts.iter().find(|b| b.path == a.path) {
            Some(b) if b.sha256 == a.sha256 => {}
            Some(_) => mismatches.push(format!("{}: content differs", a.path)),
            None => mismatches.push(format!("{}: missing", a.path)),
        }
    }
    for b in &manifest.artifacts {
        if !original.artifacts.iter().any(|a| a.path == b.path) {
            mismatches.push(format!("{}: not in the original run", b.path));
        }
    }
    Ok(RerunReport { manifest, mismatches })
}

/// Distribution of daily AA, SE and SE-bar totals for each result directory
/// (a directory holding `attribution.csv`).
pub fn cmd_attrib_stats(dirs: &[PathBuf]) -> Result<Vec<AttribStatsRow>, CliError> {
    let mut rows = Vec::new();
    for dir in dirs {
        let path = dir.join("attribution.csv");
        let input_err = |e: &dyn std::fmt::Display| CliError::Input(format!("{}: {e}", path.display()));
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| input_err(&e))?;
        let headers = rdr.headers().map_err(|e| input_err(&e))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| input_err(&format!("no {name} column")));
        let idx = [col("aa")?, col("se")?, col("sebar")?];
        let mut cols: [Vec<f64>; 3] = Default::default();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| input_err(&e))?;
            for (k, &i) in idx.iter().enumerate() {
                let cell = rec.get(i).unwrap_or("");
                cols[k].push(cell.parse().map_err(|_| input_err(&format!("unparseable value {cell:?}")))?);
            }
        }
        let label = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string());
        rows.extend(stats_rows(&label, &cols[0], &cols[1], &cols[2]));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    pub n_assets: usize,
    pub n_days: usize,
    pub seed: u64,
    pub classes: usize,
    pub initial_price: f64,
    /// Constant annual yield (percent) for an accompanying risk-free file.
    pub riskfree_percent: Option<f64>,
    pub out: PathBuf,
}

/// Writes `prices.csv`, `partition.json` and optionally `riskfree.csv`.
pub fn cmd_synth(args: &SynthArgs) -> Result<Vec<PathBuf>, CliError> {
    let spec = SynthSpec { initial_price: args.initial_price, ..SynthSpec::default_for(args.n_assets) };
    let panel: PricePanel = synthesize_panel(args.n_assets, args.n_days, args.seed, &spec)?;
    let partition = ClassPartition::even_split(panel.tickers(), args.classes)?;
    fs::create_dir_all(&args.out).map_err(io_ctx(&args.out))?;
    let prices = args.out.join("prices.csv");
    panel.write_csv(create(&prices)?).map_err(csv_err)?;
    let part = args.out.join("partition.json");
    fs::write(&part, partition.to_json() + "\n").map_err(io_ctx(&part))?;
    let mut written = vec![prices, part];
    if let Some(y) = args.riskfree_percent {
        let path = args.out.join("riskfree.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["date", "annual_yield_percent"]).map_err(csv_err)?;
        for d in panel.dates() {
            w.write_record([d.format(DATE_FORMAT).to_string(), y.to_string()]).map_err(csv_err)?;
        }
        w.flush().map_err(io_ctx(&path))?;
        written.push(path);
    }
    Ok(written)
}
