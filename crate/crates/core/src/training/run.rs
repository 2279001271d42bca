use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{DaPairing, TrainConfig};
use crate::dataset::{
    sample_distinct_pairs, sample_indices, DatasetBundle, LabeledDataset, TrainingSets, NUM_CLASSES,
};
use crate::ddcnn::{
    compute_healthy_reference, da_loss, loss_and_gradients, predict, HealthyReference, Model,
    StepBatches, Variant,
};
use crate::error::{invalid, Error, Result};
use crate::nn::{adam_step, AdamState, Mode, Precision, Scalar};
use crate::quadsim::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub classification: f64,
    /// Absent for variants trained without the DA loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub da: Option<f64>,
    pub total: f64,
}

/// Accuracy and confusion matrix indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub total: usize,
}

impl Evaluation {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u8, u8)>) -> Result<Self> {
        let mut confusion = [[0; NUM_CLASSES]; NUM_CLASSES];
        let mut total = 0;
        for (t, p) in pairs {
            if !(1..=NUM_CLASSES as u8).contains(&t) || !(1..=NUM_CLASSES as u8).contains(&p) {
                return invalid(format!("label pair ({t}, {p}) outside 1..=5"));
            }
            confusion[t as usize - 1][p as usize - 1] += 1;
            total += 1;
        }
        if total == 0 {
            return invalid("cannot evaluate on an empty dataset");
        }
        let correct: usize = (0..NUM_CLASSES).map(|k| confusion[k][k]).sum();
        Ok(Self {
            accuracy: correct as f64 / total as f64,
            confusion,
            total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: Variant,
    pub seed: u64,
    pub precision: Precision,
    /// Accuracy on the target test set.
    pub accuracy: f64,
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
    /// Accuracy on the source training set (twin variants use the healthy
    /// source reference there).
    pub source_accuracy: f64,
    /// DA loss on the fixed healthy target probe pairs before the first and
    /// after the last update (twin variants only).
    pub probe_da_start: Option<f64>,
    pub probe_da_end: Option<f64>,
    pub steps: usize,
    pub loss_history: Vec<LossRecord>,
    /// Not serialized, so result files stay byte-reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Trained weights and, for twin variants, the target healthy reference.
#[derive(Debug, Clone)]
pub struct TrainedModel<F> {
    pub model: Model<F>,
    pub reference: Option<HealthyReference>,
}

/// Everything [`fit`] produces before the test set is touched.
#[derive(Debug, Clone)]
pub struct FitOutput<F> {
    pub trained: TrainedModel<F>,
    pub source_accuracy: f64,
    pub probe_da_start: Option<f64>,
    pub probe_da_end: Option<f64>,
    pub loss_history: Vec<LossRecord>,
}

fn probe_da<F: Scalar>(model: &Model<F>, probe: &LabeledDataset) -> Result<Option<f64>> {
    if !model.variant.uses_difference() {
        return Ok(None);
    }
    let half = probe.len() / 2;
    let first = probe.batch::<F>(&(0..half).collect::<Vec<_>>())?;
    let second = probe.batch::<F>(&(half..2 * half).collect::<Vec<_>>())?;
    da_loss(model, &first, &second).map(Some)
}

/// Runs the training loop on the training sets only: `epochs × ⌊|A|/m⌋`
/// steps, each drawing fresh batches from A, D, B and E.
pub fn fit<F: Scalar>(cfg: &TrainConfig, sets: TrainingSets<'_>) -> Result<FitOutput<F>> {
    cfg.validate()?;
    let m = cfg.batch_size;
    let steps_per_epoch = sets.a.len() / m;
    if steps_per_epoch == 0 {
        return invalid(format!(
            "batch size {m} exceeds dataset A ({} windows)",
            sets.a.len()
        ));
    }
    for (name, ds) in [("D", sets.d), ("B", sets.b), ("E", sets.e)] {
        if ds.len() < m {
            return invalid(format!(
                "batch size {m} exceeds dataset {name} ({} windows)",
                ds.len()
            ));
        }
    }
    let mut model = Model::<F>::new(
        cfg.variant,
        cfg.arch(),
        sets.a.window(),
        &sets.stats.id,
        mix_seed(cfg.seed, 0x1417),
    )?;
    let lambda = cfg.effective_lambda();
    let mut batch_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xBA7C));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xD50F));
    let mut da_dropout_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 0xDAD0));
    let mut phi_state = AdamState::new(cfg.adam(), &model.phi);
    let mut head_state = AdamState::new(cfg.adam(), &model.head);
    let probe_da_start = probe_da(&model, sets.probe)?;
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut history = Vec::with_capacity(total_steps);

    for step in 0..total_steps {
        let ia = sample_indices(sets.a.len(), m, &mut batch_rng)?;
        let id = sample_indices(sets.d.len(), m, &mut batch_rng)?;
        let (ib, ie) = sample_distinct_pairs(sets.b.len(), m, &mut batch_rng)?;
        let a = sets.a.batch::<F>(&ia)?;
        let d = sets.d.batch::<F>(&id)?;
        let da_batches = if model.variant.uses_da() {
            let b = sets.b.batch::<F>(&ib)?;
            let other = match cfg.da_pairing {
                DaPairing::TargetTarget => sets.e.batch::<F>(&ie)?,
                DaPairing::TargetSource => d.clone(),
            };
            Some((b, other))
        } else {
            None
        };
        let batches = StepBatches {
            a: &a,
            d: model.variant.uses_difference().then_some(&d),
            da: da_batches.as_ref().map(|(b, e)| (b, e)),
        };
        let (values, g_phi, g_head) = loss_and_gradients(
            &model,
            batches,
            lambda,
            Mode::Train,
            &mut dropout_rng,
            &mut da_dropout_rng,
        )?;
        history.push(LossRecord {
            step,
            classification: values.classification,
            da: values.da,
            total: values.total,
        });
        if !values.total.is_finite() || !g_phi.is_finite() || !g_head.is_finite() {
            let tail: Vec<String> = history
                .iter()
                .rev()
                .take(5)
                .map(|r| format!("{}:{:.4e}", r.step, r.total))
                .collect();
            return Err(Error::Diverged {
                step,
                message: format!(
                    "non-finite loss or gradient; recent losses (step:total) {}",
                    tail.join(", ")
                ),
            });
        }
        adam_step(&mut model.phi, &g_phi, &mut phi_state)?;
        adam_step(&mut model.head, &g_head, &mut head_state)?;
        if (step + 1) % steps_per_epoch == 0 {
            debug!(
                "{} seed {} epoch {}: L_c {:.4} L {:.4}",
                cfg.variant,
                cfg.seed,
                (step + 1) / steps_per_epoch,
                values.classification,
                values.total
            );
        }
    }

    let probe_da_end = probe_da(&model, sets.probe)?;
    let (reference, source_accuracy) = if model.variant.uses_difference() {
        let source_ref = compute_healthy_reference(&model, sets.d)?;
        let src = evaluate(&model, Some(&source_ref), sets.a)?;
        (
            Some(compute_healthy_reference(&model, sets.b)?),
            src.accuracy,
        )
    } else {
        (None, evaluate(&model, None, sets.a)?.accuracy)
    };
    Ok(FitOutput {
        trained: TrainedModel { model, reference },
        source_accuracy,
        probe_da_start,
        probe_da_end,
        loss_history: history,
    })
}

/// Classifies every window of `ds`.
pub fn evaluate<F: Scalar>(
    model: &Model<F>,
    reference: Option<&HealthyReference>,
    ds: &LabeledDataset,
) -> Result<Evaluation> {
    if ds.is_empty() {
        return invalid("cannot evaluate on an empty dataset");
    }
    let mut pairs = Vec::with_capacity(ds.len());
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(256) {
        let batch = ds.batch::<F>(chunk)?;
        for (p, &t) in predict(model, &batch, reference)?.iter().zip(&batch.labels) {
            pairs.push((t, p.label));
        }
    }
    Evaluation::from_pairs(pairs)
}

/// Trains, then evaluates on the sealed target test set.
pub fn train<F: Scalar>(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
) -> Result<(TrainedModel<F>, RunResult)> {
    let start = Instant::now();
    let out = fit::<F>(cfg, bundle.training_sets())?;
    let eval = evaluate(
        &out.trained.model,
        out.trained.reference.as_ref(),
        bundle.c.open_for_evaluation(),
    )?;
    let result = RunResult {
        variant: cfg.variant,
        seed: cfg.seed,
        precision: F::PRECISION,
        accuracy: eval.accuracy,
        confusion: eval.confusion,
        source_accuracy: out.source_accuracy,
        probe_da_start: out.probe_da_start,
        probe_da_end: out.probe_da_end,
        steps: out.loss_history.len(),
        loss_history: out.loss_history,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    info!(
        "{} seed {}: target accuracy {:.3}, source accuracy {:.3}",
        cfg.variant, cfg.seed, result.accuracy, result.source_accuracy
    );
    Ok((out.trained, result))
}

/// The single-branch baseline under the same budget.
pub fn train_baseline_dcnn<F: Scalar>(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
) -> Result<(TrainedModel<F>, RunResult)> {
    train(
        &TrainConfig {
            variant: Variant::Dcnn,
            ..cfg.clone()
        },
        bundle,
    )
}

/// Trains in the configured precision; weights come back as f32 either way.
pub fn train_with_precision(
    cfg: &TrainConfig,
    bundle: &DatasetBundle,
) -> Result<(TrainedModel<f32>, RunResult)> {
    match cfg.precision {
        Precision::F32 => train::<f32>(cfg, bundle),
        Precision::F64 => {
            let (t, r) = train::<f64>(cfg, bundle)?;
            Ok((
                TrainedModel {
                    model: t.model.cast(),
                    reference: t.reference,
                },
                r,
            ))
        }
    }
}
