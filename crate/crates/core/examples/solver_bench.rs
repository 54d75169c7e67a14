use std::time::Instant;

use attrib_etl::cvar::{build_etl_lp, shift_etl_basis, solve_lp_with, worst_k_mean, SimplexOptions, TailConvention};
use attrib_etl::market_data::{synthesize_panel, to_log_returns, SynthSpec};

fn main() {
    let n = 29;
    let window = 1008;
    let days = 1300;
    let panel = synthesize_panel::<f64>(n, days, 42, &SynthSpec::default_for(n)).unwrap();
    let r = to_log_returns(&panel).unwrap();
    let opts = SimplexOptions::default();
    for alpha in [0.95, 0.99] {
        let t0 = Instant::now();
        let sc = r.scenarios(0, window);
        let lp = build_etl_lp(&sc, alpha, &[], TailConvention::EmpiricalRank).unwrap();
        let cold = solve_lp_with(&lp, &opts, None);
        let cold_t = t0.elapsed();
        let w = cold.weights.clone().unwrap();
        let emp = worst_k_mean(&sc.portfolio_returns(w.as_slice()), alpha).unwrap();
        println!("alpha {alpha}: cold {:?} it {} obj {} emp {}", cold_t, cold.iterations, cold.objective, emp);
        let mut basis = cold.basis.unwrap();
        let mut layout = lp.layout.unwrap();
        let t1 = Instant::now();
        let mut its = 0;
        let steps = 200;
        for d in 1..=steps {
            let sc = r.scenarios(d, d + window);
            let lp = build_etl_lp(&sc, alpha, &[], TailConvention::EmpiricalRank).unwrap();
            let nl = lp.layout.unwrap();
            let hint = shift_etl_basis(&basis, &layout, &nl, 1);
            let out = solve_lp_with(&lp, &opts, Some(&hint));
            assert!(out.is_optimal(), "{:?}", out.status);
            its += out.iterations;
            basis = out.basis.unwrap();
            layout = nl;
        }
        println!("  warm avg {:?} it {}", t1.elapsed() / steps as u32, its / steps);
    }
}
