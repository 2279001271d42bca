//! Per-class statistics of difference features, the data behind the
//! "healthy is near zero" and peak-value observations.

use serde::{Deserialize, Serialize};

use super::model::{difference_test, HealthyReference, Model};
use crate::dataset::{LabeledDataset, NUM_CLASSES};
use crate::error::{invalid, Result};
use crate::nn::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub label: u8,
    pub count: usize,
    /// Per-feature mean of the difference features.
    pub mean: Vec<f64>,
    /// Per-feature sample standard deviation (zero for a single window).
    pub std: Vec<f64>,
}

impl ClassSignature {
    /// Peak value: the largest |mean| over feature indices.
    pub fn peak_value(&self) -> f64 {
        self.mean.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// |mean| averaged over feature indices.
    pub fn mean_abs(&self) -> f64 {
        self.mean.iter().map(|v| v.abs()).sum::<f64>() / self.mean.len() as f64
    }
}

/// Difference-feature statistics of every label present in `ds`, in label
/// order, measured against `reference`.
pub fn class_signatures<F: Scalar>(
    model: &Model<F>,
    reference: &HealthyReference,
    ds: &LabeledDataset,
) -> Result<Vec<ClassSignature>> {
    if !model.variant.uses_difference() {
        return invalid(format!("{} has no difference features", model.variant));
    }
    let dim = model.feature_dim();
    let mut n = [0usize; NUM_CLASSES];
    let mut mean = vec![vec![0.0f64; dim]; NUM_CLASSES];
    let mut m2 = vec![vec![0.0f64; dim]; NUM_CLASSES];
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(256) {
        let batch = ds.batch::<F>(chunk)?;
        let d = difference_test(model, &batch, reference)?;
        for (row, &label) in d.data().chunks(dim).zip(&batch.labels) {
            let c = label as usize - 1;
            n[c] += 1;
            let k = n[c] as f64;
            for j in 0..dim {
                let x = row[j].f64();
                let delta = x - mean[c][j];
                mean[c][j] += delta / k;
                m2[c][j] += delta * (x - mean[c][j]);
            }
        }
    }
    Ok((0..NUM_CLASSES)
        .filter(|&c| n[c] > 0)
        .map(|c| ClassSignature {
            label: c as u8 + 1,
            count: n[c],
            std: m2[c]
                .iter()
                .map(|v| {
                    if n[c] > 1 {
                        (v / (n[c] - 1) as f64).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect(),
            mean: std::mem::take(&mut mean[c]),
        })
        .collect())
}
