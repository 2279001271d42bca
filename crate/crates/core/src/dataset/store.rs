use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::normalize::NormalizationStats;
use super::window::{Sample, NUM_ROWS};
use crate::error::{invalid, Error, Result};
use crate::nn::{Scalar, Tensor};
use crate::quadsim::Domain;

pub const NUM_CLASSES: usize = 5;
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// What a dataset is for within a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Source domain, all labels, training.
    A,
    /// Target domain, healthy, training and reference.
    B,
    /// Target domain, all labels, test only.
    C,
    /// Copy of A's healthy subset.
    D,
    /// Copy of B.
    E,
    /// Extra target healthy windows used only to monitor the DA loss.
    Probe,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::A => "a",
            Role::B => "b",
            Role::C => "c",
            Role::D => "d",
            Role::E => "e",
            Role::Probe => "probe",
        }
    }
}

/// Windows from one flight, stored contiguously.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRun {
    pub seed: u64,
    pub label: u8,
    pub damage_level: f64,
    pub windows: usize,
}

/// A set of equally shaped windows with labels 1..=5.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub(crate) role: Role,
    pub(crate) domain: Domain,
    pub(crate) window: usize,
    pub(crate) stride: usize,
    pub(crate) values: Vec<f32>,
    pub(crate) labels: Vec<u8>,
    pub(crate) episodes: Vec<EpisodeRun>,
    pub(crate) normalization: Option<NormalizationStats>,
}

/// A gathered mini-batch `[m, NUM_ROWS, window]`.
#[derive(Debug, Clone)]
pub struct Batch<F> {
    pub x: Tensor<F>,
    pub labels: Vec<u8>,
    /// Id of the normalization applied to the windows, if any.
    pub normalization_id: Option<String>,
}

impl LabeledDataset {
    /// Builds a dataset from windows; every window must share `window`.
    pub fn from_samples(
        role: Role,
        domain: Domain,
        window: usize,
        stride: usize,
        samples: &[Sample],
        episodes: Vec<EpisodeRun>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(samples.len() * NUM_ROWS * window);
        let mut labels = Vec::with_capacity(samples.len());
        for s in samples {
            if s.len != window || s.values.len() != NUM_ROWS * window {
                return invalid(format!(
                    "sample of length {} in a dataset of window {window}",
                    s.len
                ));
            }
            if !(1..=NUM_CLASSES as u8).contains(&s.label) {
                return invalid(format!("label {} outside 1..=5", s.label));
            }
            values.extend_from_slice(&s.values);
            labels.push(s.label);
        }
        if episodes.iter().map(|e| e.windows).sum::<usize>() != samples.len() {
            return invalid("episode runs do not account for every window");
        }
        Ok(Self {
            role,
            domain,
            window,
            stride,
            values,
            labels,
            episodes,
            normalization: None,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn episodes(&self) -> &[EpisodeRun] {
        &self.episodes
    }

    pub fn normalization(&self) -> Option<&NormalizationStats> {
        self.normalization.as_ref()
    }

    pub fn normalization_id(&self) -> Option<&str> {
        self.normalization.as_ref().map(|s| s.id.as_str())
    }

    /// Window `i`, row-major.
    pub fn sample(&self, i: usize) -> &[f32] {
        let n = NUM_ROWS * self.window;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Count of windows per label, index 0 for label 1.
    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize - 1] += 1;
        }
        h
    }

    pub fn batch<F: Scalar>(&self, indices: &[usize]) -> Result<Batch<F>> {
        let n = NUM_ROWS * self.window;
        let mut data = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return invalid(format!(
                    "index {i} out of range for dataset of {}",
                    self.len()
                ));
            }
            data.extend(self.sample(i).iter().map(|&v| F::of(v as f64)));
            labels.push(self.labels[i]);
        }
        Ok(Batch {
            x: Tensor::new(vec![indices.len(), NUM_ROWS, self.window], data)?,
            labels,
            normalization_id: self.normalization_id().map(str::to_owned),
        })
    }

    /// Every window, in order.
    pub fn all<F: Scalar>(&self) -> Result<Batch<F>> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    /// A relabelled copy restricted to windows with `label`.
    pub fn subset_with_label(&self, label: u8, role: Role) -> Self {
        let n = NUM_ROWS * self.window;
        let mut out = Self {
            role,
            values: Vec::new(),
            labels: Vec::new(),
            episodes: Vec::new(),
            ..self.clone()
        };
        let mut start = 0;
        for run in &self.episodes {
            if run.label == label {
                out.values
                    .extend_from_slice(&self.values[start * n..(start + run.windows) * n]);
                out.labels.extend(std::iter::repeat_n(label, run.windows));
                out.episodes.push(run.clone());
            }
            start += run.windows;
        }
        out
    }

    pub fn with_role(&self, role: Role) -> Self {
        Self {
            role,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub role: Role,
    pub domain: Domain,
    pub count: usize,
    pub counts_per_label: [usize; NUM_CLASSES],
    pub rows: usize,
    /// Window length in logged steps (T + 1).
    pub window: usize,
    pub stride: usize,
    pub normalization: Option<NormalizationStats>,
    pub episodes: Vec<EpisodeRun>,
}

fn paths(dir: &Path, role: Role) -> (PathBuf, PathBuf, PathBuf) {
    let base = role.name();
    (
        dir.join(format!("{base}.json")),
        dir.join(format!("{base}.f32")),
        dir.join(format!("{base}.labels")),
    )
}

/// Writes `<role>.json`, `<role>.f32` and `<role>.labels` into `dir`.
pub fn save_dataset(dir: &Path, ds: &LabeledDataset) -> Result<()> {
    let (manifest_path, values_path, labels_path) = paths(dir, ds.role);
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        role: ds.role,
        domain: ds.domain,
        count: ds.len(),
        counts_per_label: ds.histogram(),
        rows: NUM_ROWS,
        window: ds.window,
        stride: ds.stride,
        normalization: ds.normalization.clone(),
        episodes: ds.episodes.clone(),
    };
    let mut bytes = Vec::with_capacity(ds.values.len() * 4);
    for v in &ds.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
    fs::write(values_path, bytes)?;
    fs::write(labels_path, &ds.labels)?;
    Ok(())
}

pub fn load_dataset(dir: &Path, role: Role) -> Result<LabeledDataset> {
    let (manifest_path, values_path, labels_path) = paths(dir, role);
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let fail = |msg: String| Err(Error::Format(format!("{}: {msg}", manifest_path.display())));
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return fail(format!(
            "format version {} (expected {DATASET_FORMAT_VERSION})",
            manifest.format_version
        ));
    }
    if manifest.rows != NUM_ROWS || manifest.role != role {
        return fail("row count or role does not match".into());
    }
    let raw = fs::read(values_path)?;
    let labels = fs::read(labels_path)?;
    if raw.len() != manifest.count * NUM_ROWS * manifest.window * 4
        || labels.len() != manifest.count
    {
        return fail(format!("data files do not hold {} windows", manifest.count));
    }
    let values = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let ds = LabeledDataset {
        role,
        domain: manifest.domain,
        window: manifest.window,
        stride: manifest.stride,
        values,
        labels,
        episodes: manifest.episodes,
        normalization: manifest.normalization,
    };
    if ds
        .labels
        .iter()
        .any(|l| !(1..=NUM_CLASSES as u8).contains(l))
        || ds.histogram() != manifest.counts_per_label
    {
        return fail("label histogram does not match the manifest".into());
    }
    Ok(ds)
}
