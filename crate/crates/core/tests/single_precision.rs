use attrib_etl::backtest::{run_backtest, BacktestConfig};
use attrib_etl::market_data::{synthesize_panel, to_log_returns, ClassPartition, SynthSpec};
use attrib_etl::strategies::{StrategyId, StrategySpec};

#[test]
fn f32_backtest_tracks_f64() {
    let p64 = synthesize_panel::<f64>(8, 161, 9, &SynthSpec::default_for(8)).unwrap();
    let p32 = synthesize_panel::<f32>(8, 161, 9, &SynthSpec::default_for(8)).unwrap();
    let r64 = to_log_returns(&p64).unwrap();
    let r32 = to_log_returns(&p32).unwrap();
    let part = ClassPartition::even_split(r64.tickers(), 3).unwrap();
    for id in [StrategyId::P0, StrategyId::P4] {
        let c64 = BacktestConfig { window: 100, ..BacktestConfig::new(StrategySpec::new(id, 0.9).unwrap()) };
        let c32 = BacktestConfig { window: 100, ..BacktestConfig::new(StrategySpec::new(id, 0.9f32).unwrap()) };
        let a = run_backtest(&r64, &part, &c64).unwrap();
        let b = run_backtest(&r32, &part, &c32).unwrap();
        assert_eq!(a.n_days(), b.n_days());
        assert_eq!(b.fallback_days, 0);
        let (pa, pb) = (*a.prices.last().unwrap(), *b.prices.last().unwrap() as f64);
        assert!((pa - pb).abs() < 1e-2 * pa, "{id}: {pa} vs {pb}");
        assert!(b.max_audit_violation() < 1e-3);
    }
}
