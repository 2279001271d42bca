use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{unused_rng, Model};
use crate::dataset::Batch;
use crate::error::{invalid, Result};
use crate::nn::gradcheck::{check_gradients, sample_positions, GradCheckReport};
use crate::nn::{BoundParams, Graph, Mode, NodeId, ParamSet, Scalar};

/// The batches of one training step. `d` is the healthy source batch paired
/// position-wise with `a` (absent for the single-branch baseline); `da` holds
/// the two healthy batches whose differences the DA loss pulls to zero.
#[derive(Debug, Clone, Copy)]
pub struct StepBatches<'a, F> {
    pub a: &'a Batch<F>,
    pub d: Option<&'a Batch<F>>,
    pub da: Option<(&'a Batch<F>, &'a Batch<F>)>,
}

/// Nodes of a recorded loss.
#[derive(Debug, Clone)]
pub struct LossNodes {
    pub classification: NodeId,
    pub da: Option<NodeId>,
    pub total: NodeId,
    pub phi: BoundParams,
    pub head: BoundParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub classification: f64,
    pub da: Option<f64>,
    pub total: f64,
}

fn class_targets(labels: &[u8]) -> Vec<usize> {
    labels.iter().map(|&l| l as usize - 1).collect()
}

fn difference_node<F: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<F>,
    model: &Model<F>,
    phi: &BoundParams,
    x_i: &Batch<F>,
    x_j: &Batch<F>,
    mode: Mode,
    rng: &mut R,
) -> Result<NodeId> {
    if x_i.x.shape()[0] != x_j.x.shape()[0] {
        return invalid(format!(
            "paired batches differ in size: {} vs {}",
            x_i.x.shape()[0],
            x_j.x.shape()[0]
        ));
    }
    if x_i.x.shape()[0] == 0 {
        return invalid("empty batch");
    }
    model.check_batch(x_i)?;
    model.check_batch(x_j)?;
    let xi = g.input(x_i.x.clone());
    let xj = g.input(x_j.x.clone());
    let fi = model.phi_node(g, phi, xi, mode, rng)?;
    let fj = model.phi_node(g, phi, xj, mode, rng)?;
    let diff = g.sub(fi, fj)?;
    Ok(g.tanh(diff))
}

/// Records `L = L_c + λ·L_DA` on a fresh graph. Both branches read the same
/// bound extractor parameters. Dropout in the DA branch draws from `da_rng`
/// so the classification path sees identical masks with and without it.
pub fn build_loss<F: Scalar, R: Rng + ?Sized, S: Rng + ?Sized>(
    g: &mut Graph<F>,
    model: &Model<F>,
    batches: StepBatches<'_, F>,
    lambda: f64,
    mode: Mode,
    rng: &mut R,
    da_rng: &mut S,
) -> Result<LossNodes> {
    if !(lambda >= 0.0) {
        return invalid(format!("DA weight must be non-negative, got {lambda}"));
    }
    let phi = g.bind(&model.phi);
    let head = g.bind(&model.head);
    let inputs = match (model.variant.uses_difference(), batches.d) {
        (true, Some(d)) => difference_node(g, model, &phi, batches.a, d, mode, rng)?,
        (true, None) => return invalid(format!("{} needs a paired healthy batch", model.variant)),
        (false, _) => {
            model.check_batch(batches.a)?;
            let x = g.input(batches.a.x.clone());
            let f = model.phi_node(g, &phi, x, mode, rng)?;
            g.tanh(f)
        }
    };
    let logits = model.head_node(g, &head, inputs, mode, rng)?;
    let probs = g.softmax(logits)?;
    let classification = g.cross_entropy(probs, &class_targets(&batches.a.labels))?;
    let (da, total) = match batches.da {
        Some((b, e)) => {
            let diff = difference_node(g, model, &phi, b, e, mode, da_rng)?;
            let mean = g.mean_rows(diff)?;
            let da = g.squared_norm(mean);
            let weighted = g.scale(da, F::of(lambda));
            (Some(da), g.add(classification, weighted)?)
        }
        None => (None, classification),
    };
    Ok(LossNodes {
        classification,
        da,
        total,
        phi,
        head,
    })
}

/// Loss values and gradients for the extractor and head.
pub fn loss_and_gradients<F: Scalar, R: Rng + ?Sized, S: Rng + ?Sized>(
    model: &Model<F>,
    batches: StepBatches<'_, F>,
    lambda: f64,
    mode: Mode,
    rng: &mut R,
    da_rng: &mut S,
) -> Result<(LossValues, ParamSet<F>, ParamSet<F>)> {
    let mut g = Graph::new();
    let nodes = build_loss(&mut g, model, batches, lambda, mode, rng, da_rng)?;
    let grads = g.backward(nodes.total)?;
    let scalar = |id: NodeId| g.value(id).data()[0].f64();
    let values = LossValues {
        classification: scalar(nodes.classification),
        da: nodes.da.map(scalar),
        total: scalar(nodes.total),
    };
    Ok((
        values,
        grads.for_params(&nodes.phi, &model.phi),
        grads.for_params(&nodes.head, &model.head),
    ))
}

/// Deterministic classification loss of `a` against healthy `d`.
pub fn classification_loss<F: Scalar>(
    model: &Model<F>,
    a: &Batch<F>,
    d: Option<&Batch<F>>,
) -> Result<f64> {
    let mut g = Graph::new();
    let mut rng = unused_rng();
    let nodes = build_loss(
        &mut g,
        model,
        StepBatches { a, d, da: None },
        0.0,
        Mode::Eval,
        &mut rng,
        &mut unused_rng(),
    )?;
    Ok(g.value(nodes.classification).data()[0].f64())
}

/// Deterministic DA loss: squared norm of the batch-mean difference
/// features of paired healthy batches.
pub fn da_loss<F: Scalar>(model: &Model<F>, b: &Batch<F>, e: &Batch<F>) -> Result<f64> {
    let mut g = Graph::new();
    let phi = g.bind(&model.phi);
    let mut rng = unused_rng();
    let diff = difference_node(&mut g, model, &phi, b, e, Mode::Eval, &mut rng)?;
    let mean = g.mean_rows(diff)?;
    let da = g.squared_norm(mean);
    Ok(g.value(da).data()[0].f64())
}

/// `‖mean(d)‖²` over difference vectors.
pub fn da_loss_from_differences(diffs: &[Vec<f64>]) -> Result<f64> {
    let Some(first) = diffs.first() else {
        return invalid("DA loss of an empty batch");
    };
    if diffs.iter().any(|d| d.len() != first.len()) {
        return invalid("difference vectors differ in length");
    }
    let n = diffs.len() as f64;
    Ok((0..first.len())
        .map(|k| diffs.iter().map(|d| d[k]).sum::<f64>() / n)
        .map(|m| m * m)
        .sum())
}

/// `mean(‖d‖²)`: diagnostic only, unlike the norm of the mean it cannot
/// cancel across the batch.
pub fn mean_of_norms(diffs: &[Vec<f64>]) -> Result<f64> {
    if diffs.is_empty() {
        return invalid("empty batch");
    }
    Ok(diffs
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / diffs.len() as f64)
}

pub fn total_loss(classification: f64, da: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return invalid(format!("DA weight must be non-negative, got {lambda}"));
    }
    Ok(classification + lambda * da)
}

/// Compares the taped gradients of the full training loss against central
/// finite differences at `count` sampled parameters. Dropout masks are fixed
/// by replaying the same `dropout_seed` for every evaluation.
pub fn check_loss_gradients(
    model: &Model<f64>,
    batches: StepBatches<'_, f64>,
    lambda: f64,
    dropout_seed: u64,
    count: usize,
    h: f64,
    position_seed: u64,
) -> Result<GradCheckReport> {
    let streams = || {
        (
            ChaCha8Rng::seed_from_u64(dropout_seed),
            ChaCha8Rng::seed_from_u64(dropout_seed ^ 0xDA),
        )
    };
    let (mut r1, mut r2) = streams();
    let (_, g_phi, g_head) =
        loss_and_gradients(model, batches, lambda, Mode::Train, &mut r1, &mut r2)?;
    let sets = [model.phi.clone(), model.head.clone()];
    let positions = sample_positions(&sets, count, &mut ChaCha8Rng::seed_from_u64(position_seed));
    let mut probe = model.clone();
    check_gradients(&sets, &[g_phi, g_head], &positions, h, |p| {
        probe.phi = p[0].clone();
        probe.head = p[1].clone();
        let (mut r1, mut r2) = streams();
        let mut g = Graph::new();
        let nodes = build_loss(
            &mut g,
            &probe,
            batches,
            lambda,
            Mode::Train,
            &mut r1,
            &mut r2,
        )?;
        Ok(g.value(nodes.total).data()[0])
    })
}
