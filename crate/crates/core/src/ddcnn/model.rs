use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, Variant};
use crate::dataset::{Batch, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::nn::{BoundParams, Graph, Mode, NodeId, ParamSet, Scalar, Sequential, Tensor};
use crate::quadsim::mix_seed;

/// A twin network: one extractor parameter set `phi` read by both branches,
/// and a classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub variant: Variant,
    pub arch: ArchConfig,
    pub window: usize,
    pub extractor: Sequential,
    pub classifier: Sequential,
    pub phi: ParamSet<F>,
    pub head: ParamSet<F>,
    /// Normalization the model was trained under; inputs must match it.
    pub normalization_id: String,
}

impl<F: Scalar> Model<F> {
    pub fn new(
        variant: Variant,
        arch: ArchConfig,
        window: usize,
        normalization_id: &str,
        seed: u64,
    ) -> Result<Self> {
        let extractor = arch.extractor(window)?;
        let classifier = arch.classifier()?;
        let phi = extractor.init_params(seed);
        let head = classifier.init_params(mix_seed(seed, 0x4EAD));
        Ok(Self {
            variant,
            arch,
            window,
            extractor,
            classifier,
            phi,
            head,
            normalization_id: normalization_id.into(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.arch.feature_dim
    }

    /// Identifies the extractor weights; references carry it.
    pub fn fingerprint(&self) -> String {
        self.phi.fingerprint()
    }

    pub fn cast<G: Scalar>(&self) -> Model<G> {
        Model {
            variant: self.variant,
            arch: self.arch.clone(),
            window: self.window,
            extractor: self.extractor.clone(),
            classifier: self.classifier.clone(),
            phi: self.phi.cast(),
            head: self.head.cast(),
            normalization_id: self.normalization_id.clone(),
        }
    }

    pub(crate) fn check_batch(&self, batch: &Batch<F>) -> Result<()> {
        match batch.normalization_id.as_deref() {
            Some(id) if id == self.normalization_id => Ok(()),
            Some(id) => invalid(format!(
                "batch normalized with {id}, model expects {}",
                self.normalization_id
            )),
            None => invalid("batch is not normalized"),
        }
    }

    /// Records `φ(x)` on `g`.
    pub fn phi_node<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<F>,
        phi: &BoundParams,
        x: NodeId,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        self.extractor.forward(g, x, phi, mode, rng)
    }

    /// Records classifier logits for difference features `d`.
    pub fn head_node<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<F>,
        head: &BoundParams,
        d: NodeId,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        self.classifier.forward(g, d, head, mode, rng)
    }
}

// Eval-mode passes draw nothing; the forward API still wants a generator.
pub(crate) fn unused_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

/// Deterministic `φ(x)` for every window of `batch`, shape `[m, feature_dim]`.
pub fn extract_features<F: Scalar>(model: &Model<F>, batch: &Batch<F>) -> Result<Tensor<F>> {
    model.check_batch(batch)?;
    let mut g = Graph::new();
    let phi = g.bind(&model.phi);
    let x = g.input(batch.x.clone());
    let f = model.phi_node(&mut g, &phi, x, Mode::Eval, &mut unused_rng())?;
    Ok(g.value(f).clone())
}

/// `tanh(f_i − f_j)` elementwise.
pub fn difference_train<F: Scalar>(f_i: &[F], f_j: &[F]) -> Result<Vec<F>> {
    if f_i.len() != f_j.len() {
        return invalid(format!(
            "feature lengths differ: {} vs {}",
            f_i.len(),
            f_j.len()
        ));
    }
    Ok(f_i.iter().zip(f_j).map(|(&a, &b)| (a - b).tanh()).collect())
}

/// Mean extractor output over a healthy set, tied to the weights that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HealthyReference {
    pub features: Vec<f64>,
    /// Number of healthy windows averaged.
    pub count: usize,
    /// Role of the dataset the windows came from.
    pub dataset: String,
    pub normalization_id: String,
    pub params_fingerprint: String,
}

const CHUNK: usize = 256;

/// One-pass mean of `φ(x)` over `healthy`, which must hold label 1 only.
pub fn compute_healthy_reference<F: Scalar>(
    model: &Model<F>,
    healthy: &LabeledDataset,
) -> Result<HealthyReference> {
    if healthy.is_empty() {
        return invalid("cannot average features of an empty set");
    }
    if healthy.labels().iter().any(|&l| l != 1) {
        return invalid("reference set must contain healthy (label 1) windows only");
    }
    let dim = model.feature_dim();
    let mut mean = vec![0.0f64; dim];
    let mut seen = 0usize;
    let indices: Vec<usize> = (0..healthy.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let batch = healthy.batch::<F>(chunk)?;
        let f = extract_features(model, &batch)?;
        for row in f.data().chunks(dim) {
            seen += 1;
            let k = seen as f64;
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += (v.f64() - *m) / k;
            }
        }
    }
    Ok(HealthyReference {
        features: mean,
        count: seen,
        dataset: healthy.role().name().to_string(),
        normalization_id: model.normalization_id.clone(),
        params_fingerprint: model.fingerprint(),
    })
}

/// `tanh(φ(x) − φ̄)` for every window of `batch`, one extractor pass each.
pub fn difference_test<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<F>,
    reference: &HealthyReference,
) -> Result<Tensor<F>> {
    if reference.params_fingerprint != model.fingerprint() {
        return invalid("reference was computed with different extractor weights");
    }
    if reference.features.len() != model.feature_dim() {
        return invalid("reference length does not match the feature dimension");
    }
    let f = extract_features(model, batch)?;
    let r: Vec<F> = reference.features.iter().map(|&v| F::of(v)).collect();
    let dim = r.len();
    let mut data = Vec::with_capacity(f.len());
    for row in f.data().chunks(dim) {
        data.extend(difference_train(row, &r)?);
    }
    Tensor::new(f.shape().to_vec(), data)
}

/// Classifier inputs for inference: difference features against the
/// reference, or `tanh(φ(x))` for the single-branch baseline.
pub fn inference_inputs<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<F>,
    reference: Option<&HealthyReference>,
) -> Result<Tensor<F>> {
    match (model.variant.uses_difference(), reference) {
        (true, Some(r)) => difference_test(model, batch, r),
        (true, None) => Err(Error::Usage(format!(
            "{} needs a healthy reference",
            model.variant
        ))),
        (false, None) => Ok(extract_features(model, batch)?.map(|v| v.tanh())),
        (false, Some(_)) => Err(Error::Usage("the dcnn baseline takes no reference".into())),
    }
}

/// Softmax probabilities `[m, 5]` for classifier inputs `d`.
pub fn classify<F: Scalar>(model: &Model<F>, d: &Tensor<F>) -> Result<Tensor<F>> {
    let mut g = Graph::new();
    let head = g.bind(&model.head);
    let x = g.input(d.clone());
    let logits = model.head_node(&mut g, &head, x, Mode::Eval, &mut unused_rng())?;
    let p = g.softmax(logits)?;
    Ok(g.value(p).clone())
}

/// Label (1-based) of the largest probability; ties go to the lowest label.
pub fn argmax_label<F: Scalar>(probs: &[F]) -> u8 {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best as u8 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub probs: Vec<f64>,
}

pub fn predict<F: Scalar>(
    model: &Model<F>,
    batch: &Batch<F>,
    reference: Option<&HealthyReference>,
) -> Result<Vec<Prediction>> {
    let d = inference_inputs(model, batch, reference)?;
    let p = classify(model, &d)?;
    let k = p.shape()[1];
    Ok(p.data()
        .chunks(k)
        .map(|row| Prediction {
            label: argmax_label(row),
            probs: row.iter().map(|v| v.f64()).collect(),
        })
        .collect())
}
