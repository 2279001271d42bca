mod common;

use common::{cycle_labels, normalized, raw, WINDOW};
use propfault_core::dataset::{normalize, NormalizationStats, Role};
use propfault_core::ddcnn::*;
use propfault_core::nn::{cross_entropy, softmax_slice, Tensor};
use propfault_core::quadsim::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(variant: Variant, norm: &str, seed: u64) -> Model<f64> {
    Model::new(variant, ArchConfig::default(), WINDOW, norm, seed).unwrap()
}

fn zero_head(mut m: Model<f64>) -> Model<f64> {
    m.head = m.head.zeros_like();
    m
}

#[test]
fn softmax_sums_to_one_and_argmax_ignores_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let row: Vec<f64> = (0..5).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let p = softmax_slice(&row);
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        let c = rng.gen_range(-100.0..100.0);
        let shifted: Vec<f64> = row.iter().map(|v| v + c).collect();
        assert_eq!(argmax_label(&p), argmax_label(&softmax_slice(&shifted)));
    }
    let p = softmax_slice(&[2.0f64, 0.0, 0.0, 0.0, 0.0]);
    let e2 = 2f64.exp();
    assert!((p[0] - e2 / (e2 + 4.0)).abs() < 1e-15);
}

#[test]
fn cross_entropy_of_uniform_is_log_five() {
    for class in 0..5 {
        let mut t = [0.0f64; 5];
        t[class] = 1.0;
        let l = cross_entropy(&t, &[0.2; 5]).unwrap();
        assert!((l - 5f64.ln()).abs() <= 1e-9);
    }
    let l = cross_entropy(
        &[1.0f64, 0.0, 0.0, 0.0, 0.0],
        &[0.5, 0.125, 0.125, 0.125, 0.125],
    )
    .unwrap();
    assert!((l - 2f64.ln()).abs() <= 1e-12);
}

#[test]
fn difference_train_examples_and_antisymmetry() {
    assert_eq!(
        difference_train(&[0.3f64, -2.0], &[0.3, -2.0]).unwrap(),
        vec![0.0, 0.0]
    );
    let sat = difference_train(&[10.0f64], &[0.0]).unwrap()[0];
    assert!(sat < 1.0 && sat > 0.999_999);
    assert_eq!(
        difference_train(&[1.0f64], &[0.5]).unwrap(),
        vec![0.5f64.tanh()]
    );
    assert!(difference_train(&[1.0f64], &[0.5, 0.1]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let a: Vec<f64> = (0..64).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ab = difference_train(&a, &b).unwrap();
        let ba = difference_train(&b, &a).unwrap();
        assert!(ab.iter().zip(&ba).all(|(x, y)| *x == -*y));
        assert!(ab.iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn da_loss_worked_examples() {
    assert_eq!(
        da_loss_from_differences(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap(),
        0.0
    );
    let d = vec![0.2, -0.7, 0.4];
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    assert!(da_loss_from_differences(&[d, neg]).unwrap().abs() <= 1e-12);
    assert!((da_loss_from_differences(&[vec![0.3, -0.4]]).unwrap() - 0.25).abs() <= 1e-12);
    assert!(da_loss_from_differences(&[]).is_err());
    // cancellation: the diagnostic does not cancel
    assert!((mean_of_norms(&[vec![0.3, -0.4], vec![-0.3, 0.4]]).unwrap() - 0.25).abs() <= 1e-12);
}

#[test]
fn total_loss_arithmetic() {
    assert!((total_loss(1.0, 0.5, 0.1).unwrap() - 1.05).abs() < 1e-15);
    assert_eq!(total_loss(0.7, 123.0, 0.0).unwrap(), 0.7);
    assert!(total_loss(1.0, 0.5, -0.1).is_err());
}

#[test]
fn zero_head_gives_uniform_prediction_and_log_five() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(20), 1);
    let healthy = ds.subset_with_label(1, Role::D);
    let id = ds.normalization_id().unwrap().to_string();
    let m = zero_head(model(Variant::Ddcnn, &id, 3));
    let a = ds.batch::<f64>(&(0..8).collect::<Vec<_>>()).unwrap();
    let d = healthy.batch::<f64>(&[0, 1, 2, 3, 0, 1, 2, 3]).unwrap();
    let l = classification_loss(&m, &a, Some(&d)).unwrap();
    assert!((l - 5f64.ln()).abs() <= 1e-6);

    let r = compute_healthy_reference(&m, &healthy).unwrap();
    for p in predict(&m, &a, Some(&r)).unwrap() {
        assert_eq!(p.label, 1);
        assert!(p.probs.iter().all(|&q| (q - 0.2).abs() < 1e-12));
    }
}

#[test]
fn shared_extractor_is_pure_and_sixty_four_wide() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(10), 2);
    let m = model(Variant::DdcnnDa, ds.normalization_id().unwrap(), 4);
    let b = ds.all::<f64>().unwrap();
    let f1 = extract_features(&m, &b).unwrap();
    let f2 = extract_features(&m, &b).unwrap();
    assert_eq!(f1, f2);
    assert_eq!(f1.shape(), &[10, 64]);
    // both branches of a training pair read the same weights
    let d = b.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (v, _, _) = loss_and_gradients(
        &m,
        StepBatches {
            a: &b,
            d: Some(&d),
            da: Some((&b, &d)),
        },
        0.1,
        propfault_core::nn::Mode::Eval,
        &mut rng,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(v.da, Some(0.0));
}

#[test]
fn unnormalized_or_foreign_batches_are_rejected() {
    let ds = raw(Role::A, Domain::Source, &cycle_labels(10), 2);
    let m = model(Variant::Ddcnn, "abc", 4);
    assert!(extract_features(&m, &ds.all::<f64>().unwrap()).is_err());
    let stats = NormalizationStats::compute(&ds).unwrap();
    let n = normalize(&ds, &stats).unwrap();
    assert!(extract_features(&m, &n.all::<f64>().unwrap()).is_err());
}

#[test]
fn healthy_reference_is_a_streaming_mean() {
    // 600 windows cross several internal chunks
    let ds = normalized(Role::B, Domain::Target, &vec![1; 600], 7);
    let m = model(Variant::DdcnnDa, ds.normalization_id().unwrap(), 9);
    let r = compute_healthy_reference(&m, &ds).unwrap();
    assert_eq!(r.count, 600);
    assert_eq!(r.dataset, "b");
    let f = extract_features(&m, &ds.all::<f64>().unwrap()).unwrap();
    for k in 0..64 {
        let batch_mean = f.data().iter().skip(k).step_by(64).sum::<f64>() / 600.0;
        assert!((batch_mean - r.features[k]).abs() <= 1e-6);
    }

    let one = ds.subset_with_label(1, Role::B);
    let single = common::from_samples(
        Role::B,
        Domain::Target,
        &[propfault_core::dataset::Sample {
            values: one.sample(0).to_vec(),
            len: WINDOW,
            label: 1,
            domain: Domain::Target,
        }],
    );
    // the copy is no longer marked normalized, so it cannot be averaged
    assert!(compute_healthy_reference(&m, &single).is_err());
    let r1 = compute_healthy_reference(&m, &ds.subset_with_label(1, Role::B)).unwrap();
    assert_eq!(r1.features, r.features);
}

#[test]
fn healthy_reference_ignores_duplication_and_order() {
    let base = common::raw(Role::B, Domain::Target, &[1; 40], 8);
    let stats = NormalizationStats::compute(&base).unwrap();
    let ds = normalize(&base, &stats).unwrap();
    let m = model(Variant::DdcnnDa, &stats.id, 1);
    let r = compute_healthy_reference(&m, &ds).unwrap();

    let samples = |order: &[usize]| -> Vec<propfault_core::dataset::Sample> {
        order
            .iter()
            .map(|&i| propfault_core::dataset::Sample {
                values: base.sample(i).to_vec(),
                len: WINDOW,
                label: 1,
                domain: Domain::Target,
            })
            .collect()
    };
    let build = |order: &[usize]| {
        let raw = common::from_samples(Role::B, Domain::Target, &samples(order));
        normalize(&raw, &stats).unwrap()
    };
    let doubled: Vec<usize> = (0..40).chain(0..40).collect();
    let rd = compute_healthy_reference(&m, &build(&doubled)).unwrap();
    let mut perm: Vec<usize> = (0..40).collect();
    perm.reverse();
    perm.swap(3, 17);
    let rp = compute_healthy_reference(&m, &build(&perm)).unwrap();
    for k in 0..64 {
        assert!((rd.features[k] - r.features[k]).abs() <= 1e-9);
        assert!((rp.features[k] - r.features[k]).abs() <= 1e-6);
    }

    let single = build(&[5]);
    let r1 = compute_healthy_reference(&m, &single).unwrap();
    let f = extract_features(&m, &single.all::<f64>().unwrap()).unwrap();
    assert_eq!(r1.features, f.data().to_vec());
}

#[test]
fn reference_must_be_healthy_and_non_empty() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(10), 2);
    let m = model(Variant::Ddcnn, ds.normalization_id().unwrap(), 4);
    assert!(compute_healthy_reference(&m, &ds).is_err());
    assert!(compute_healthy_reference(
        &m,
        &ds.subset_with_label(1, Role::D)
            .subset_with_label(2, Role::D)
    )
    .is_err());
}

#[test]
fn difference_test_matches_naive_recomputation() {
    let b = normalized(Role::B, Domain::Target, &[1; 30], 3);
    let m = model(Variant::DdcnnDa, b.normalization_id().unwrap(), 5);
    let r = compute_healthy_reference(&m, &b).unwrap();
    let batch = b.all::<f64>().unwrap();
    let d = difference_test(&m, &batch, &r).unwrap();
    let f = extract_features(&m, &batch).unwrap();
    let mut mean = vec![0.0; 64];
    for row in f.data().chunks(64) {
        for k in 0..64 {
            mean[k] += row[k] / 30.0;
        }
    }
    for (row_d, row_f) in d.data().chunks(64).zip(f.data().chunks(64)) {
        for k in 0..64 {
            assert!((row_d[k] - (row_f[k] - mean[k]).tanh()).abs() <= 1e-6);
            assert!(row_d[k].abs() < 1.0);
        }
    }

    let mut other = m.clone();
    other
        .phi
        .set_flat(0, other.phi.get_flat(0).unwrap() + 1e-3)
        .unwrap();
    assert!(difference_test(&other, &batch, &r).is_err());
    assert!(inference_inputs(&m, &batch, None).is_err());
}

#[test]
fn baseline_rejects_reference_and_reads_tanh_features() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(10), 2);
    let m = model(Variant::Dcnn, ds.normalization_id().unwrap(), 4);
    let batch = ds.all::<f64>().unwrap();
    let x = inference_inputs(&m, &batch, None).unwrap();
    let f = extract_features(&m, &batch).unwrap();
    assert_eq!(x, f.map(|v| v.tanh()));
    let r = HealthyReference {
        features: vec![0.0; 64],
        count: 1,
        dataset: "b".into(),
        normalization_id: m.normalization_id.clone(),
        params_fingerprint: m.fingerprint(),
    };
    assert!(inference_inputs(&m, &batch, Some(&r)).is_err());
    let zero = Tensor::zeros(&[3, 64]);
    let p = classify(&zero_head(m), &zero).unwrap();
    assert!(p.data().iter().all(|&q| (q - 0.2).abs() < 1e-12));
}

#[test]
fn loss_inputs_are_validated() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(10), 2);
    let m = model(Variant::DdcnnDa, ds.normalization_id().unwrap(), 4);
    let a = ds.batch::<f64>(&[0, 1, 2, 3]).unwrap();
    let d = ds.batch::<f64>(&[0, 5, 0]).unwrap();
    assert!(classification_loss(&m, &a, Some(&d)).is_err());
    assert!(classification_loss(&m, &a, None).is_err());
    let d = ds.batch::<f64>(&[0, 5, 0, 5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let neg = loss_and_gradients(
        &m,
        StepBatches {
            a: &a,
            d: Some(&d),
            da: None,
        },
        -1.0,
        propfault_core::nn::Mode::Eval,
        &mut rng,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert!(neg.is_err());
}

#[test]
fn lambda_zero_total_equals_classification() {
    let ds = normalized(Role::A, Domain::Source, &cycle_labels(12), 2);
    let b = normalized(Role::B, Domain::Target, &[1; 8], 3);
    let m = model(Variant::DdcnnDa, ds.normalization_id().unwrap(), 4);
    let bb = b.batch::<f64>(&[0, 1, 2, 3]).unwrap();
    let mut b = bb.clone();
    // same normalization id as the model for the DA batches
    b.normalization_id = Some(m.normalization_id.clone());
    let e = b.clone();
    let e = propfault_core::dataset::Batch {
        x: Tensor::new(
            e.x.shape().to_vec(),
            e.x.data().iter().rev().copied().collect(),
        )
        .unwrap(),
        ..e
    };
    let a = ds.batch::<f64>(&[0, 1, 2, 3]).unwrap();
    let d = ds.batch::<f64>(&[0, 5, 10, 0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (v, _, _) = loss_and_gradients(
        &m,
        StepBatches {
            a: &a,
            d: Some(&d),
            da: Some((&b, &e)),
        },
        0.0,
        propfault_core::nn::Mode::Eval,
        &mut rng,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(v.total, v.classification);
    assert!(v.da.unwrap() > 0.0);
    let direct = da_loss(&m, &b, &e).unwrap();
    assert!((direct - v.da.unwrap()).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip() {
    let b = normalized(Role::B, Domain::Target, &[1; 12], 3);
    let m: Model<f32> = Model::new(
        Variant::DdcnnDa,
        ArchConfig::default(),
        WINDOW,
        b.normalization_id().unwrap(),
        6,
    )
    .unwrap();
    let r = compute_healthy_reference(&m, &b).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_model(dir.path(), &m, Some(&r), 6).unwrap();
    let (back, rb, manifest) = load_model::<f32>(dir.path()).unwrap();
    assert_eq!(back, m);
    assert_eq!(rb, Some(r));
    assert_eq!(manifest.variant, Variant::DdcnnDa);
    assert_eq!(manifest.phi_fingerprint, m.fingerprint());

    // a reference that no longer fits the stored weights is refused
    let mut other = m.clone();
    other.phi.set_flat(3, 0.5).unwrap();
    let stale = compute_healthy_reference(&other, &b).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    assert!(save_model(dir2.path(), &m, Some(&stale), 6).is_err());
    std::fs::write(
        dir.path().join("reference.json"),
        serde_json::to_vec(&stale).unwrap(),
    )
    .unwrap();
    assert!(load_model::<f32>(dir.path()).is_err());

    std::fs::write(dir.path().join("phi.bin"), b"junk").unwrap();
    assert!(load_model::<f32>(dir.path()).is_err());
}

#[test]
fn class_signatures_match_direct_statistics() {
    let ds = normalized(Role::C, Domain::Target, &cycle_labels(300), 4);
    let m = model(Variant::DdcnnDa, ds.normalization_id().unwrap(), 2);
    let r = compute_healthy_reference(&m, &ds.subset_with_label(1, Role::B)).unwrap();
    let sigs = class_signatures(&m, &r, &ds).unwrap();
    assert_eq!(
        sigs.iter().map(|s| s.label).collect::<Vec<_>>(),
        vec![1, 2, 3, 4, 5]
    );
    for s in &sigs {
        let sub = ds.subset_with_label(s.label, Role::C);
        let d = difference_test(&m, &sub.all::<f64>().unwrap(), &r).unwrap();
        let n = sub.len() as f64;
        assert_eq!(s.count, sub.len());
        for k in [0, 17, 63] {
            let col: Vec<f64> = d.data().iter().skip(k).step_by(64).copied().collect();
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((s.mean[k] - mean).abs() < 1e-12);
            assert!((s.std[k] - var.sqrt()).abs() < 1e-9);
        }
        assert!(s.peak_value() >= s.mean_abs());
    }
    // healthy windows measured against their own mean sit near zero
    assert!(sigs[0].mean_abs() < sigs[1].mean_abs());
    let dcnn = model(Variant::Dcnn, ds.normalization_id().unwrap(), 2);
    assert!(class_signatures(&dcnn, &r, &ds).is_err());
}
