//! Evaluation metrics: success statistics over repeated runs, step
//! efficiency, and trading performance over a ledger of transactions.

mod trade;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::RunResult;

pub use trade::{parse_ledger, trade_metrics, turnover_rate, TradeLedger, TradeMetrics, Transaction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("ledger has no successful trades")]
    EmptyLedger,
    #[error("{0} is undefined: its denominator is zero")]
    ZeroDenominator(&'static str),
    #[error("invalid transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: String },
    #[error("ledger line {line}: {message}")]
    LedgerParse { line: usize, message: String },
}

/// Rounds half up (towards +inf) to `places` decimals. Inputs that are a
/// hair below a half because of binary representation still round up.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let m = 10f64.powi(places as i32);
    ((x * m) + 0.5 + 1e-9).floor() / m
}

/// `100 * expected / actual`, as a percentage.
pub fn efficiency(expected: f64, actual: f64) -> Result<f64, MetricsError> {
    if actual == 0.0 {
        return Err(MetricsError::DivisionByZero);
    }
    Ok(100.0 * expected / actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessStats {
    pub successes: usize,
    pub total: usize,
    /// Mean and population standard deviation of steps over successful
    /// runs; absent when no run succeeded.
    pub mean_steps: Option<f64>,
    pub std_steps: Option<f64>,
}

pub fn success_stats(runs: &[RunResult]) -> SuccessStats {
    let steps: Vec<f64> = runs.iter().filter(|r| r.success).map(|r| r.steps_used as f64).collect();
    let (mean, std) = if steps.is_empty() {
        (None, None)
    } else {
        let n = steps.len() as f64;
        let mean = steps.iter().sum::<f64>() / n;
        let var = steps.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        (Some(mean), Some(var.sqrt()))
    };
    SuccessStats { successes: steps.len(), total: runs.len(), mean_steps: mean, std_steps: std }
}

impl fmt::Display for SuccessStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.mean_steps, self.std_steps) {
            (Some(m), Some(s)) => write!(f, "{m:.2} ± {s:.2} ({}/{})", self.successes, self.total),
            _ => write!(f, "N/A ({}/{})", self.successes, self.total),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn run(steps: u32, success: bool) -> RunResult {
        RunResult { steps_used: steps, success, reason: None, trajectory: None, stage_ticks: BTreeMap::new(), provider_calls: BTreeMap::new() }
    }

    #[test]
    fn stats_examples() {
        let s = success_stats(&[13, 10, 16, 12, 14].map(|n| run(n, true)));
        assert_eq!(s.mean_steps, Some(13.0));
        assert_eq!(s.std_steps, Some(2.0));
        assert_eq!(s.to_string(), "13.00 ± 2.00 (5/5)");
        let none = success_stats(&vec![run(3, false); 5]);
        assert_eq!(none.mean_steps, None);
        assert_eq!(none.to_string(), "N/A (0/5)");
        let one = success_stats(&[run(7, true)]);
        assert_eq!((one.mean_steps, one.std_steps), (Some(7.0), Some(0.0)));
    }

    #[test]
    fn efficiency_rows() {
        assert_eq!(round_half_up(efficiency(3.0, 1.0).unwrap(), 2), 300.0);
        assert_eq!(round_half_up(efficiency(6.0, 16.0).unwrap(), 2), 37.5);
        assert_eq!(efficiency(4.0, 4.0).unwrap(), 100.0);
        assert_eq!(efficiency(1.0, 0.0), Err(MetricsError::DivisionByZero));
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(92.857142, 2), 92.86);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(1.005, 2), 1.01);
        assert_eq!(round_half_up(-8.065, 2), -8.06);
    }

    proptest! {
        #[test]
        fn efficiency_scale_invariant(e in 1u32..1000, a in 1u32..1000) {
            let x = efficiency(e as f64, a as f64).unwrap();
            let y = efficiency(2.0 * e as f64, 2.0 * a as f64).unwrap();
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}
