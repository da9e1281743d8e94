use std::fmt;

use serde::{Deserialize, Serialize};

use super::{round_half_up, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub buy: f64,
    pub sell: f64,
    pub valuation: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TradeLedger {
    pub transactions: Vec<Transaction>,
    pub failed: u32,
}

/// Trade metrics as fractions (0.5 means 50%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeMetrics {
    pub tr: f64,
    pub gpm: f64,
    pub roi: f64,
    pub vd: f64,
    pub bpvr: f64,
    pub spvr: f64,
    pub apr: f64,
    pub mrr: f64,
    pub min_rr: f64,
}

impl TradeMetrics {
    pub const NAMES: [&'static str; 9] = ["TR", "GPM", "ROI", "VD", "BPVR", "SPVR", "APR", "MRR", "mRR"];

    pub fn values(&self) -> [f64; 9] {
        [self.tr, self.gpm, self.roi, self.vd, self.bpvr, self.spvr, self.apr, self.mrr, self.min_rr]
    }

    /// Percentages rounded half up to two decimals.
    pub fn percentages(&self) -> [f64; 9] {
        self.values().map(|v| round_half_up(100.0 * v, 2))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (k, v) in Self::NAMES.iter().zip(self.percentages()) {
            m.insert(k.to_string(), serde_json::json!(v));
        }
        serde_json::Value::Object(m)
    }
}

impl fmt::Display for TradeMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in Self::NAMES.iter().zip(self.percentages()) {
            writeln!(f, "{k:<5} {v:>10.2}%")?;
        }
        Ok(())
    }
}

/// Fraction of attempted items that were traded: `n / (n + m)`.
pub fn turnover_rate(n: usize, m: u32) -> Result<f64, MetricsError> {
    let total = n as f64 + m as f64;
    if total == 0.0 {
        return Err(MetricsError::ZeroDenominator("TR"));
    }
    Ok(n as f64 / total)
}

fn ratio(num: f64, den: f64, name: &'static str) -> Result<f64, MetricsError> {
    if den == 0.0 {
        Err(MetricsError::ZeroDenominator(name))
    } else {
        Ok(num / den)
    }
}

pub fn trade_metrics(ledger: &TradeLedger) -> Result<TradeMetrics, MetricsError> {
    let tx = &ledger.transactions;
    if tx.is_empty() {
        return Err(MetricsError::EmptyLedger);
    }
    for (index, t) in tx.iter().enumerate() {
        let finite = t.buy.is_finite() && t.sell.is_finite() && t.valuation.is_finite();
        if !finite || t.buy < 0.0 || t.sell < 0.0 || t.valuation < 0.0 {
            return Err(MetricsError::InvalidTransaction { index, reason: "prices must be finite and non-negative".into() });
        }
    }
    let sum_b: f64 = tx.iter().map(|t| t.buy).sum();
    let sum_s: f64 = tx.iter().map(|t| t.sell).sum();
    let sum_v: f64 = tx.iter().map(|t| t.valuation).sum();
    let profit: f64 = tx.iter().map(|t| t.sell - t.buy).sum();
    let rates = tx.iter().map(|t| ratio(t.sell - t.buy, t.buy, "return rate")).collect::<Result<Vec<f64>, _>>()?;
    Ok(TradeMetrics {
        tr: turnover_rate(tx.len(), ledger.failed)?,
        gpm: ratio(profit, sum_s, "GPM")?,
        roi: ratio(profit, sum_b, "ROI")?,
        vd: ratio(tx.iter().map(|t| t.sell - t.valuation).sum(), sum_v, "VD")?,
        bpvr: ratio(sum_b, sum_v, "BPVR")?,
        spvr: ratio(sum_s, sum_v, "SPVR")?,
        apr: rates.iter().sum::<f64>() / rates.len() as f64,
        mrr: rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_rr: rates.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Reads a ledger: a `failed=<m>` line, an optional `buy,sell,valuation`
/// header, then one transaction per line.
pub fn parse_ledger(text: &str) -> Result<TradeLedger, MetricsError> {
    let bad = |line: usize, message: String| MetricsError::LedgerParse { line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, first) = lines.next().ok_or_else(|| bad(1, "empty ledger".into()))?;
    let failed = first
        .trim()
        .strip_prefix("failed=")
        .and_then(|m| m.trim().parse::<u32>().ok())
        .ok_or_else(|| bad(ln + 1, "expected `failed=<m>`".into()))?;
    let mut transactions = Vec::new();
    for (i, text) in lines {
        let line = i + 1;
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
        let rec = rdr
            .records()
            .next()
            .ok_or_else(|| bad(line, "empty record".into()))?
            .map_err(|e| bad(line, e.to_string()))?;
        if transactions.is_empty() && rec.get(0) == Some("buy") {
            continue;
        }
        if rec.len() != 3 {
            return Err(bad(line, format!("expected 3 fields, found {}", rec.len())));
        }
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(line, format!("invalid number `{}`", &rec[i])));
        transactions.push(Transaction { buy: f(0)?, sell: f(1)?, valuation: f(2)? });
    }
    Ok(TradeLedger { transactions, failed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tx(buy: f64, sell: f64, valuation: f64) -> Transaction {
        Transaction { buy, sell, valuation }
    }

    #[test]
    fn single_item() {
        let m = trade_metrics(&TradeLedger { transactions: vec![tx(100.0, 150.0, 150.0)], failed: 0 }).unwrap();
        assert_eq!(m.percentages(), [100.0, 33.33, 50.0, 0.0, 66.67, 100.0, 50.0, 50.0, 50.0]);
    }

    #[test]
    fn turnover_thirteen_of_fourteen() {
        let ledger = TradeLedger { transactions: vec![tx(10.0, 12.0, 11.0); 13], failed: 1 };
        assert_eq!(trade_metrics(&ledger).unwrap().percentages()[0], 92.86);
    }

    #[test]
    fn zero_profit_and_errors() {
        let m = trade_metrics(&TradeLedger { transactions: vec![tx(5.0, 5.0, 7.0), tx(9.0, 9.0, 1.0)], failed: 2 }).unwrap();
        assert_eq!((m.gpm, m.roi, m.apr, m.mrr, m.min_rr), (0.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(trade_metrics(&TradeLedger::default()), Err(MetricsError::EmptyLedger));
        let free = TradeLedger { transactions: vec![tx(0.0, 5.0, 5.0)], failed: 0 };
        assert!(matches!(trade_metrics(&free), Err(MetricsError::ZeroDenominator(_))));
    }

    #[test]
    fn ledger_csv() {
        let l = parse_ledger("failed=2\nbuy,sell,valuation\n100, 150, 140\n20,25,30\n").unwrap();
        assert_eq!(l.failed, 2);
        assert_eq!(l.transactions, vec![tx(100.0, 150.0, 140.0), tx(20.0, 25.0, 30.0)]);
        assert!(parse_ledger("100,150,140\n").is_err());
        assert!(matches!(parse_ledger("failed=0\n1,2\n"), Err(MetricsError::LedgerParse { line: 2, .. })));
    }
}
