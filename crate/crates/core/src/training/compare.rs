use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::run::{train_with_precision, RunResult};
use crate::dataset::DatasetBundle;
use crate::ddcnn::Variant;
use crate::error::{invalid, Result};

/// One (variant, seed) cell of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub variant: Variant,
    pub seed: u64,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn accuracy(&self) -> Option<f64> {
        self.result.as_ref().map(|r| r.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub failed: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1).
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    /// Reseeding covers weight initialization, batch order and dropout; the
    /// dataset bundle is shared by every run.
    pub data_policy: String,
    pub summaries: Vec<VariantSummary>,
    pub cells: Vec<CellOutcome>,
}

impl ComparisonReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(|c| c.result.is_none())
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn summarize(seeds: &[u64], cells: Vec<CellOutcome>) -> ComparisonReport {
    let summaries = Variant::ALL
        .into_iter()
        .map(|variant| {
            let acc: Vec<f64> = cells
                .iter()
                .filter(|c| c.variant == variant)
                .filter_map(CellOutcome::accuracy)
                .collect();
            let total = cells.iter().filter(|c| c.variant == variant).count();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            VariantSummary {
                variant,
                runs: acc.len(),
                failed: total - acc.len(),
                mean_accuracy,
                std_accuracy,
            }
        })
        .collect();
    ComparisonReport {
        seeds: seeds.to_vec(),
        data_policy: "weights, batch order and dropout reseeded per run; one shared dataset bundle"
            .into(),
        summaries,
        cells,
    }
}

/// Trains every variant for every seed on the same bundle. Failed runs are
/// recorded and do not stop the others.
pub fn run_comparison(
    base: &TrainConfig,
    bundle: &DatasetBundle,
    seeds: &[u64],
) -> Result<ComparisonReport> {
    if seeds.len() < 2 {
        return invalid("a comparison needs at least two seeds");
    }
    base.validate()?;
    let jobs: Vec<(Variant, u64)> = Variant::ALL
        .into_iter()
        .flat_map(|v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(variant, seed)| {
            let cfg = TrainConfig {
                variant,
                seed,
                ..base.clone()
            };
            match train_with_precision(&cfg, bundle) {
                Ok((_, result)) => CellOutcome {
                    variant,
                    seed,
                    result: Some(result),
                    error: None,
                },
                Err(e) => {
                    warn!("{variant} seed {seed} failed: {e}");
                    CellOutcome {
                        variant,
                        seed,
                        result: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(summarize(seeds, cells))
}
