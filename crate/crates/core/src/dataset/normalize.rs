use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::store::LabeledDataset;
use super::window::NUM_ROWS;
use crate::error::{invalid, Error, Result};

/// Per-row mean and standard deviation of the source training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationStats {
    pub mean: [f64; NUM_ROWS],
    pub std: [f64; NUM_ROWS],
    /// Content hash of `mean` and `std`; marks datasets these stats were
    /// applied to.
    pub id: String,
}

impl NormalizationStats {
    pub fn new(mean: [f64; NUM_ROWS], std: [f64; NUM_ROWS]) -> Result<Self> {
        for (r, &s) in std.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return invalid(format!("row {} has zero or non-finite variance", r + 1));
            }
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return invalid("non-finite row mean");
        }
        let mut h = Sha256::new();
        for v in mean.iter().chain(&std) {
            h.update(v.to_le_bytes());
        }
        let id = h.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self { mean, std, id })
    }

    /// Population statistics over every window and time step of `ds`.
    pub fn compute(ds: &LabeledDataset) -> Result<Self> {
        if ds.normalization.is_some() {
            return Err(Error::Usage(
                "statistics must come from raw, unnormalized windows".into(),
            ));
        }
        if ds.is_empty() {
            return invalid("cannot compute statistics of an empty dataset");
        }
        let w = ds.window();
        let mut mean = [0.0; NUM_ROWS];
        let mut sq = [0.0; NUM_ROWS];
        for i in 0..ds.len() {
            let s = ds.sample(i);
            for r in 0..NUM_ROWS {
                for &v in &s[r * w..(r + 1) * w] {
                    mean[r] += v as f64;
                }
            }
        }
        let n = (ds.len() * w) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        for i in 0..ds.len() {
            let s = ds.sample(i);
            for r in 0..NUM_ROWS {
                for &v in &s[r * w..(r + 1) * w] {
                    let d = v as f64 - mean[r];
                    sq[r] += d * d;
                }
            }
        }
        Self::new(mean, sq.map(|v| (v / n).sqrt()))
    }

    /// z-scores one raw window in place.
    pub fn apply(&self, window: usize, values: &mut [f32]) {
        for r in 0..NUM_ROWS {
            for v in &mut values[r * window..(r + 1) * window] {
                *v = ((*v as f64 - self.mean[r]) / self.std[r]) as f32;
            }
        }
    }
}

/// Applies `stats` to every window. Refuses datasets that already carry a
/// normalization, since z-scoring twice is not the same as once.
pub fn normalize(ds: &LabeledDataset, stats: &NormalizationStats) -> Result<LabeledDataset> {
    if let Some(prev) = &ds.normalization {
        return Err(Error::Usage(format!(
            "dataset {:?} already normalized (id {})",
            ds.role(),
            prev.id
        )));
    }
    let mut out = ds.clone();
    let n = NUM_ROWS * ds.window();
    for chunk in out.values.chunks_exact_mut(n) {
        stats.apply(ds.window(), chunk);
    }
    out.normalization = Some(stats.clone());
    Ok(out)
}

/// Per-row mean over all windows and time steps.
pub fn row_means(ds: &LabeledDataset) -> [f64; NUM_ROWS] {
    let w = ds.window();
    let mut mean = [0.0; NUM_ROWS];
    for i in 0..ds.len() {
        let s = ds.sample(i);
        for r in 0..NUM_ROWS {
            mean[r] += s[r * w..(r + 1) * w].iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    mean.map(|m| m / (ds.len() * w).max(1) as f64)
}
