use std::time::Instant;

use attrib_etl::attribution::ExpectedReturns;
use attrib_etl::market_data::{equi_weight_benchmark, synthesize_panel, to_log_returns, ClassPartition, SynthSpec};
use attrib_etl::strategies::{solve_day_warm, StrategyId, StrategySpec, WarmStart};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let id: StrategyId = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(StrategyId::P2);
    let alpha: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.95);
    let steps: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(100);
    let verbose = args.get(4).is_some();
    let n = 29;
    let window = 1008;
    let panel = synthesize_panel::<f64>(n, window + steps + 2, 42, &SynthSpec::default_for(n)).unwrap();
    let r = to_log_returns(&panel).unwrap();
    let part = ClassPartition::even_split(r.tickers(), 6).unwrap();
    let bench = equi_weight_benchmark::<f64>(&part);
    let spec = StrategySpec::new(id, alpha).unwrap();
    let mut warm = WarmStart::new();
    let mut prev = bench.clone();
    let t0 = Instant::now();
    let mut its = 0;
    let mut fb = 0;
    for d in 0..steps {
        let sc = r.scenarios(d, d + window);
        let mu = ExpectedReturns::new(sc.column_means()).unwrap();
        let t = Instant::now();
        let day = solve_day_warm(&spec, &sc, &bench, &part, &mu, &prev, &mut warm, d).unwrap();
        if verbose {
            println!("{d}: it {} {:?} {:?}", day.iterations, t.elapsed(), day.stage_status);
        }
        its += day.iterations;
        if day.is_fallback() {
            fb += 1;
        }
        prev = day.weights;
    }
    println!("{id} {alpha}: avg {:?} it {} fallback {fb}", t0.elapsed() / steps as u32, its / steps);
}
