use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use attrib_etl::strategies::StrategyId;
use attrib_etl_cli::{
    cmd_attrib_stats, cmd_backtest, cmd_rerun, cmd_synth, write_attrib_stats, BacktestArgs, CliError, SynthArgs,
    MANIFEST_FILE,
};
use clap::{Args, Parser, Subcommand};

/// Attribution-constrained expected-tail-loss backtests.
#[derive(Debug, Parser)]
#[command(name = "attrib-etl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic price panel and a contiguous class partition.
    Synth(SynthCmd),
    /// Backtest a grid of strategies and quantile levels.
    Backtest(BacktestCmd),
    /// Summarize daily AA, SE and SEbar totals of result directories.
    AttribStats(AttribStatsCmd),
    /// Re-run the grid recorded in a manifest and compare every artifact.
    Rerun(RerunCmd),
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 29)]
    n_assets: usize,
    /// Number of price rows.
    #[arg(long, default_value_t = 3241)]
    n_days: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 100.0)]
    initial_price: f64,
    /// Also write riskfree.csv with this constant annual yield in percent.
    #[arg(long)]
    riskfree_yield: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BacktestCmd {
    #[arg(long)]
    prices: PathBuf,
    /// CSV with `date,annual_yield_percent`; zero rate when omitted.
    #[arg(long)]
    riskfree: Option<PathBuf>,
    #[arg(long)]
    partition: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "P0,P1,P2,P3,P4,P5,P6,P7,P8")]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.95,0.99")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 1008)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
    /// Recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    aa_min: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    se_min: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    sebar_min: f64,
    #[arg(long, default_value_t = 1.0)]
    initial_price: f64,
    /// Trailing window of the moving risk table.
    #[arg(long, default_value_t = 1008)]
    moving_window: usize,
    /// Worker threads for the grid (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Replace a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct AttribStatsCmd {
    /// Result directories, each holding attribution.csv.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RerunCmd {
    /// manifest.json, or the directory containing it.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    force: bool,
    #[arg(long, short)]
    quiet: bool,
}

fn set_threads(n: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Synth(c) => {
            let files = cmd_synth(&SynthArgs {
                n_assets: c.n_assets,
                n_days: c.n_days,
                seed: c.seed,
                classes: c.classes,
                initial_price: c.initial_price,
                riskfree_percent: c.riskfree_yield,
                out: c.out,
            })?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Backtest(c) => {
            set_threads(c.threads)?;
            let strategies =
                c.strategies.iter().map(|s| s.parse::<StrategyId>()).collect::<Result<Vec<_>, _>>()?;
            let args = BacktestArgs {
                riskfree: c.riskfree,
                strategies,
                alphas: c.alphas,
                window: c.window,
                seed: c.seed,
                aa_min: c.aa_min,
                se_min: c.se_min,
                sebar_min: c.sebar_min,
                initial_price: c.initial_price,
                moving_window: c.moving_window,
                ..BacktestArgs::new(c.prices, c.partition, c.out)
            };
            let manifest = cmd_backtest(&args, c.force, c.quiet)?;
            println!("{}", args.out.join(MANIFEST_FILE).display());
            let dead = manifest.all_fallback_runs();
            if !dead.is_empty() {
                eprintln!("no feasible day in: {}", dead.join(", "));
                return Ok(ExitCode::from(3));
            }
        }
        Command::AttribStats(c) => {
            let rows = cmd_attrib_stats(&c.results)?;
            match c.out {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| CliError::Internal(format!("{}: {e}", p.display())))?;
                    write_attrib_stats(&rows, f)?;
                }
                None => write_attrib_stats(&rows, io::stdout().lock())?,
            }
        }
        Command::Rerun(c) => {
            set_threads(c.threads)?;
            let path = if c.manifest.is_dir() { c.manifest.join(MANIFEST_FILE) } else { c.manifest };
            let report = cmd_rerun(&path, &c.out, c.force, c.quiet)?;
            if !report.identical() {
                for m in &report.mismatches {
                    eprintln!("{m}");
                }
                return Err(CliError::Internal(format!("{} artifacts differ from the recorded run", report.mismatches.len())));
            }
            println!("{} artifacts reproduced identically", report.manifest.artifacts.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => ExitCode::from(4),
    }
}
