//! Distribution summaries of daily attribution totals.

use serde::Serialize;

/// Values with magnitude at or below this count as zero.
pub const ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub pct_negative: f64,
    pub pct_zero: f64,
    pub pct_positive: f64,
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Option<Distribution> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let neg = s.iter().filter(|&&v| v < -ZERO_TOL).count();
    let pos = s.iter().filter(|&&v| v > ZERO_TOL).count();
    let zero = s.len() - neg - pos;
    Some(Distribution {
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
        pct_negative: 100.0 * neg as f64 / n,
        pct_zero: 100.0 * zero as f64 / n,
        pct_positive: 100.0 * pos as f64 / n,
    })
}

/// One row of the attribution-distribution table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttribStatsRow {
    pub label: String,
    pub quantity: &'static str,
    #[serde(flatten)]
    pub dist: Distribution,
}

pub const QUANTITIES: [&str; 3] = ["AA", "SE", "SEbar"];

pub fn stats_rows(label: &str, aa: &[f64], se: &[f64], se_bar: &[f64]) -> Vec<AttribStatsRow> {
    QUANTITIES
        .iter()
        .zip([aa, se, se_bar])
        .filter_map(|(&quantity, v)| describe(v).map(|dist| AttribStatsRow { label: label.to_string(), quantity, dist }))
        .collect()
}
