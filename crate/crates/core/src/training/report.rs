//! JSON and CSV outputs of training runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::compare::ComparisonReport;
use super::run::{LossRecord, RunResult};
use crate::error::Result;

/// `step,L_c,L_DA,L`; the DA column is left out when no step computed it.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let with_da = history.iter().any(|r| r.da.is_some());
    let mut out = String::from(if with_da {
        "step,L_c,L_DA,L\n"
    } else {
        "step,L_c,L\n"
    });
    for r in history {
        match (with_da, r.da) {
            (true, da) => {
                let da = da.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{}", r.step, r.classification, da, r.total).unwrap();
            }
            (false, _) => writeln!(out, "{},{},{}", r.step, r.classification, r.total).unwrap(),
        }
    }
    out
}

/// `variant,seed,accuracy` per cell; failed cells have an empty accuracy.
pub fn comparison_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("variant,seed,accuracy\n");
    for c in &report.cells {
        let acc = c.accuracy().map(|a| a.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", c.variant, c.seed, acc).unwrap();
    }
    out
}

pub fn write_run(dir: &Path, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("run_result.json"),
        serde_json::to_vec_pretty(result)?,
    )?;
    fs::write(
        dir.join("loss_history.csv"),
        loss_history_csv(&result.loss_history),
    )?;
    Ok(())
}

pub fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("comparison.json"),
        serde_json::to_vec_pretty(report)?,
    )?;
    fs::write(dir.join("comparison.csv"), comparison_csv(report))?;
    Ok(())
}
