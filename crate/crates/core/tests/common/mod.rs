#![allow(dead_code)]

use propfault_core::dataset::{
    normalize, EpisodeRun, LabeledDataset, NormalizationStats, Role, Sample, NUM_ROWS,
};
use propfault_core::quadsim::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WINDOW: usize = 32;

/// Random windows with a label-dependent offset on one rotor row, so a
/// model can tell the classes apart.
pub fn raw(role: Role, domain: Domain, labels: &[u8], seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = labels
        .iter()
        .map(|&label| {
            let mut values: Vec<f32> = (0..NUM_ROWS * WINDOW)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            if label > 1 {
                let row = 3 + label as usize - 2;
                for v in &mut values[row * WINDOW..(row + 1) * WINDOW] {
                    *v += 2.0;
                }
            }
            Sample {
                values,
                len: WINDOW,
                label,
                domain,
            }
        })
        .collect();
    from_samples(role, domain, &samples)
}

/// One pseudo-episode per window.
pub fn from_samples(role: Role, domain: Domain, samples: &[Sample]) -> LabeledDataset {
    let runs = samples
        .iter()
        .enumerate()
        .map(|(i, s)| EpisodeRun {
            seed: i as u64,
            label: s.label,
            damage_level: 0.0,
            windows: 1,
        })
        .collect();
    LabeledDataset::from_samples(role, domain, WINDOW, WINDOW / 2, samples, runs).unwrap()
}

/// `raw` normalized with its own statistics.
pub fn normalized(role: Role, domain: Domain, labels: &[u8], seed: u64) -> LabeledDataset {
    let ds = raw(role, domain, labels, seed);
    let stats = NormalizationStats::compute(&ds).unwrap();
    normalize(&ds, &stats).unwrap()
}

pub fn cycle_labels(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i % 5) as u8 + 1).collect()
}
