//! Attribution-constrained expected-tail-loss portfolio optimization.
//!
//! The core is generic over the floating-point scalar (`f64` or `f32`); the
//! aliases at the crate root fix it to `f64`.

pub mod attribution;
pub mod backtest;
pub mod cvar;
pub mod market_data;
pub mod matrix;
pub mod risk_metrics;
pub mod scalar;
pub mod strategies;

pub use scalar::Scalar;

pub type WeightVector = attribution::WeightVector<f64>;
pub type ExpectedReturns = attribution::ExpectedReturns<f64>;
pub type AttributionReport = attribution::AttributionReport<f64>;
pub type ScenarioMatrix = cvar::ScenarioMatrix<f64>;
pub type LinearProgram = cvar::LinearProgram<f64>;
pub type WeightConstraint = cvar::WeightConstraint<f64>;
pub type PricePanel = market_data::PricePanel<f64>;
pub type ReturnPanel = market_data::ReturnPanel<f64>;
pub type RiskFreeSeries = market_data::RiskFreeSeries<f64>;
pub type Matrix = matrix::Matrix<f64>;
