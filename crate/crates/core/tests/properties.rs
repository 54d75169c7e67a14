use attrib_etl::attribution::{attribute, interaction_alt_form, InteractionForm};
use attrib_etl::cvar::{build_etl_lp, empirical_etl, empirical_var, solve_lp, worst_k_mean, TailConvention};
use attrib_etl::market_data::{synthesize_panel, to_log_returns, ClassPartition, SynthSpec};
use attrib_etl::{ExpectedReturns, ScenarioMatrix, WeightVector};
use proptest::prelude::*;

fn simplex_point(raw: &[f64]) -> WeightVector {
    let s: f64 = raw.iter().sum();
    WeightVector::new(raw.iter().map(|x| x / s).collect()).unwrap()
}

fn tickers(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("T{i}")).collect()
}

/// Portfolio weights, strictly positive benchmark weights, returns and a
/// class count for `n` assets.
fn attribution_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
    (2usize..=29).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n),
            prop::collection::vec(0.05..1.0f64, n),
            prop::collection::vec(-0.05..0.05f64, n),
            1usize..=n.min(6),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn attribution_sums_to_excess_return((wp, wb, mu, m) in attribution_case()) {
        prop_assume!(wp.iter().sum::<f64>() > 0.0);
        let part = ClassPartition::even_split(&tickers(wp.len()), m).unwrap();
        let r = attribute(&simplex_point(&wp), &simplex_point(&wb), &part, &ExpectedReturns::new(mu).unwrap()).unwrap();
        let t = r.totals;
        prop_assert!((t.aa + t.se + t.interaction - t.excess).abs() <= 1e-12);
        for c in &r.classes {
            prop_assert!((c.se_bar - c.se - c.interaction).abs() <= 1e-12);
            prop_assert!((c.se_bar - c.weight_p * (c.return_p - c.return_b)).abs() <= 1e-12);
        }
    }

    #[test]
    fn interaction_forms_agree((wp, wb, mu, m) in attribution_case()) {
        prop_assume!(wp.iter().sum::<f64>() > 0.0);
        let part = ClassPartition::even_split(&tickers(wp.len()), m).unwrap();
        let r = attribute(&simplex_point(&wp), &simplex_point(&wb), &part, &ExpectedReturns::new(mu).unwrap()).unwrap();
        for (i, c) in r.classes.iter().enumerate() {
            let b = interaction_alt_form(&r, i, InteractionForm::OverweightTimesSelection).unwrap();
            prop_assert!((b - c.interaction).abs() <= 1e-12);
            if let Ok(a) = interaction_alt_form(&r, i, InteractionForm::AllocationTimesSelection) {
                prop_assert!((a - c.interaction).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn etl_is_translation_invariant_and_homogeneous(
        xs in prop::collection::vec(-0.1..0.1f64, 1..200),
        shift in -0.05..0.05f64,
        scale in 0.1..10.0f64,
        alpha in prop_oneof![Just(0.8), Just(0.9), Just(0.95), Just(0.99)],
    ) {
        let etl = empirical_etl(&xs, alpha).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let scaled: Vec<f64> = xs.iter().map(|x| x * scale).collect();
        prop_assert!((empirical_etl(&shifted, alpha).unwrap() - (etl - shift)).abs() <= 1e-12);
        prop_assert!((empirical_etl(&scaled, alpha).unwrap() - scale * etl).abs() <= 1e-12 * scale.max(1.0));
        prop_assert!(etl >= empirical_var(&xs, alpha).unwrap());
    }

    #[test]
    fn lp_optimum_is_the_worst_k_mean_of_its_weights(
        rows in prop::collection::vec(prop::collection::vec(-0.05..0.05f64, 3), 10..40),
        alpha in prop_oneof![Just(0.8), Just(0.9), Just(0.95)],
    ) {
        let sc = ScenarioMatrix::from_rows(&rows).unwrap();
        let out = solve_lp(&build_etl_lp(&sc, alpha, &[], TailConvention::EmpiricalRank).unwrap());
        prop_assert!(out.is_optimal());
        let w = out.weights.unwrap();
        let achieved = worst_k_mean(&sc.portfolio_returns(w.as_slice()), alpha).unwrap();
        prop_assert!((achieved - out.objective).abs() <= 1e-9);
        // No single asset does better.
        for a in 0..3 {
            let mut e = [0.0; 3];
            e[a] = 1.0;
            prop_assert!(out.objective <= worst_k_mean(&sc.portfolio_returns(&e), alpha).unwrap() + 1e-9);
        }
    }

    #[test]
    fn prices_survive_a_log_return_round_trip(seed in any::<u64>(), n in 1usize..6, days in 2usize..60) {
        let panel = synthesize_panel::<f64>(n, days, seed, &SynthSpec::default_for(n)).unwrap();
        let r = to_log_returns(&panel).unwrap();
        let first = panel.closes().row(0).to_vec();
        let back = r.reconstruct_prices(&first);
        for t in 0..days {
            for a in 0..n {
                let want = panel.closes().get(t, a);
                prop_assert!((back.get(t, a) - want).abs() <= 1e-10 * want);
            }
        }
    }
}
