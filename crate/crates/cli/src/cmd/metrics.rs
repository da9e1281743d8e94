use std::path::PathBuf;
use std::process::ExitCode;

use cradle_core::harness::{efficiency as efficiency_pct, parse_ledger, round_half_up, success_stats, trade_metrics};
use cradle_core::trajectory::summarize_run;

use super::{config, failed, CmdResult};

pub fn runs(paths: &[PathBuf], json: bool) -> CmdResult {
    if paths.is_empty() {
        return Err(config("no trajectories given"));
    }
    let results = paths.iter().map(|p| summarize_run(p).map_err(config)).collect::<Result<Vec<_>, _>>()?;
    let stats = success_stats(&results);
    if json {
        let runs: Vec<_> = results.iter().map(|r| serde_json::json!({"steps": r.steps_used, "success": r.success})).collect();
        println!("{}", serde_json::json!({ "stats": stats, "runs": runs }));
    } else {
        for (p, r) in paths.iter().zip(&results) {
            println!("{:<40} steps {:>4}  {}", p.display(), r.steps_used, if r.success { "success" } else { "failure" });
        }
        println!("{stats}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn trade(ledger: &PathBuf, json: bool) -> CmdResult {
    let text = std::fs::read_to_string(ledger).map_err(|e| config(format!("{}: {e}", ledger.display())))?;
    let ledger = parse_ledger(&text).map_err(config)?;
    let m = trade_metrics(&ledger).map_err(failed)?;
    if json {
        println!("{}", m.to_json());
    } else {
        print!("{m}");
    }
    Ok(ExitCode::SUCCESS)
}

pub fn efficiency(expected: f64, actual: f64, json: bool) -> CmdResult {
    let pct = round_half_up(efficiency_pct(expected, actual).map_err(failed)?, 2);
    if json {
        println!("{}", serde_json::json!({ "expected": expected, "actual": actual, "efficiency": pct }));
    } else {
        println!("{pct:.2}%");
    }
    Ok(ExitCode::SUCCESS)
}
