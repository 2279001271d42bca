use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normalize::{normalize, NormalizationStats};
use super::store::{load_dataset, save_dataset, EpisodeRun, LabeledDataset, Role, NUM_CLASSES};
use super::window::{window_count, window_episode, Sample};
use crate::error::{invalid, Error, Result};
use crate::quadsim::{
    mix_seed, simulate_episode, Domain, DomainShiftProfile, EpisodeRequest, ExcursionSettings,
    FaultSpec, FlightPlan, QuadParams, SimSettings,
};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Full,
}

/// Windows per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub a_per_label: usize,
    pub b: usize,
    pub c_per_label: usize,
}

impl Scale {
    pub fn counts(self) -> SplitCounts {
        match self {
            Scale::Desk => SplitCounts {
                a_per_label: 600,
                b: 600,
                c_per_label: 200,
            },
            Scale::Full => SplitCounts {
                a_per_label: 3000,
                b: 3000,
                c_per_label: 800,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BundleConfig {
    pub scale: Scale,
    /// Window length in logged steps (T + 1).
    pub window: usize,
    pub stride: usize,
    /// Length of each simulated flight, s.
    pub episode_duration_s: f64,
    /// Healthy target windows held out for monitoring the DA loss.
    pub probe_windows: usize,
    /// Source fault episodes draw their damage level uniformly from here.
    pub source_damage_range: [f64; 2],
    /// Damage level of each rotor's fault category in the target test set,
    /// rotor 1 first (labels 2..=5).
    pub target_damage: [f64; 4],
    /// Flown by every source category.
    pub source_plan: FlightPlan,
    /// Target flights are random excursions, seeded per flight.
    pub target_excursion: ExcursionSettings,
    pub quad: QuadParams,
    pub target_shift: DomainShiftProfile,
    pub sim: SimSettings,
    pub seed: u64,
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self {
            scale: Scale::Desk,
            window: 32,
            stride: 15,
            episode_duration_s: 20.0,
            probe_windows: 256,
            source_damage_range: [0.15, 0.40],
            target_damage: [0.25, 0.35, 0.35, 0.15],
            source_plan: FlightPlan::source_circuit(),
            target_excursion: ExcursionSettings::default(),
            quad: QuadParams::default(),
            target_shift: DomainShiftProfile::default_target(),
            sim: SimSettings::default(),
            seed: 2024,
        }
    }
}

impl BundleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.stride == 0 {
            return invalid("window must be >= 2 steps and stride >= 1");
        }
        let [lo, hi] = self.source_damage_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return invalid("source damage range must satisfy 0 <= lo <= hi <= 1");
        }
        if self.target_damage.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return invalid("target damage levels must lie in [0, 1]");
        }
        if self.probe_windows < 2 {
            return invalid("probe set needs at least two windows");
        }
        if self.windows_per_episode() == 0 {
            return invalid(format!(
                "{}s episodes at {} Hz are shorter than one window",
                self.episode_duration_s, self.sim.log_rate_hz
            ));
        }
        self.source_plan.validate()?;
        self.target_excursion.plan(0).validate()?;
        self.quad.validate_nominal()?;
        self.target_shift.validate()?;
        self.sim.validate()
    }

    pub fn windows_per_episode(&self) -> usize {
        let steps = (self.episode_duration_s * self.sim.log_rate_hz).floor();
        if !(steps >= 0.0) {
            return 0;
        }
        window_count(steps as usize, self.window, self.stride)
    }
}

/// Test windows that only evaluation may read. Every read is counted.
#[derive(Debug)]
pub struct SealedTestSet {
    data: LabeledDataset,
    opened: AtomicUsize,
}

impl SealedTestSet {
    pub fn new(data: LabeledDataset) -> Self {
        Self {
            data,
            opened: AtomicUsize::new(0),
        }
    }

    pub fn open_for_evaluation(&self) -> &LabeledDataset {
        self.opened.fetch_add(1, Ordering::SeqCst);
        &self.data
    }

    pub fn access_count(&self) -> usize {
        self.opened.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        self.data.histogram()
    }

    pub fn episodes(&self) -> &[EpisodeRun] {
        self.data.episodes()
    }
}

/// Everything the training procedure is allowed to read.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSets<'a> {
    pub a: &'a LabeledDataset,
    pub b: &'a LabeledDataset,
    pub d: &'a LabeledDataset,
    pub e: &'a LabeledDataset,
    pub probe: &'a LabeledDataset,
    pub stats: &'a NormalizationStats,
}

/// Normalized datasets A–E plus the DA probe set.
#[derive(Debug)]
pub struct DatasetBundle {
    pub config: BundleConfig,
    pub stats: NormalizationStats,
    pub a: LabeledDataset,
    pub b: LabeledDataset,
    pub d: LabeledDataset,
    pub e: LabeledDataset,
    pub probe: LabeledDataset,
    pub c: SealedTestSet,
}

impl DatasetBundle {
    pub fn training_sets(&self) -> TrainingSets<'_> {
        TrainingSets {
            a: &self.a,
            b: &self.b,
            d: &self.d,
            e: &self.e,
            probe: &self.probe,
            stats: &self.stats,
        }
    }
}

fn in_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Validation(m) => Error::Validation(format!("{ctx}: {m}")),
        Error::Unstable(m) => Error::Unstable(format!("{ctx}: {m}")),
        other => other,
    }
}

fn role_salt(role: Role) -> u64 {
    match role {
        Role::A => 1,
        Role::B => 2,
        Role::C => 3,
        Role::Probe => 4,
        Role::D => 5,
        Role::E => 6,
    }
}

/// Flies enough episodes of one category to fill `needed` windows.
fn generate_category(
    cfg: &BundleConfig,
    role: Role,
    label: u8,
    needed: usize,
) -> Result<(Vec<Sample>, Vec<EpisodeRun>)> {
    let ctx = format!("dataset {} label {label}", role.name().to_uppercase());
    let per = cfg.windows_per_episode();
    let episodes = needed.div_ceil(per);
    let domain = if role == Role::A {
        Domain::Source
    } else {
        Domain::Target
    };
    let flights: Vec<Result<(Vec<Sample>, EpisodeRun)>> = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let seed = mix_seed(
                cfg.seed,
                (role_salt(role) << 40) | ((label as u64) << 32) | k as u64,
            );
            let damage = match (role, label) {
                (_, 1) => 0.0,
                (Role::A, _) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xDA));
                    let [lo, hi] = cfg.source_damage_range;
                    if hi > lo {
                        rng.gen_range(lo..hi)
                    } else {
                        lo
                    }
                }
                _ => cfg.target_damage[label as usize - 2],
            };
            let (shift, plan) = match domain {
                Domain::Source => (DomainShiftProfile::identity(), cfg.source_plan.clone()),
                Domain::Target => (cfg.target_shift.clone(), cfg.target_excursion.plan(seed)),
            };
            let req = EpisodeRequest {
                params: cfg.quad.clone(),
                fault: FaultSpec::for_label(label, damage)?,
                shift,
                domain,
                plan,
                duration_s: cfg.episode_duration_s,
                seed,
                min_samples: cfg.window,
            };
            let ep = simulate_episode(&req, &cfg.sim)?;
            let windows = window_episode(&ep, cfg.window, cfg.stride);
            let run = EpisodeRun {
                seed: ep.seed,
                label,
                damage_level: damage,
                windows: windows.len(),
            };
            Ok((windows, run))
        })
        .collect();
    let mut samples = Vec::with_capacity(needed);
    let mut runs = Vec::with_capacity(episodes);
    for flight in flights {
        let (mut windows, mut run) = flight.map_err(|e| in_context(e, &ctx))?;
        windows.truncate(needed - samples.len());
        run.windows = windows.len();
        samples.extend(windows);
        runs.push(run);
    }
    if samples.len() < needed {
        return Err(Error::Unstable(format!(
            "{ctx}: only {} of {needed} windows generated",
            samples.len()
        )));
    }
    Ok((samples, runs))
}

fn generate_dataset(
    cfg: &BundleConfig,
    role: Role,
    labels: &[u8],
    per_label: usize,
) -> Result<LabeledDataset> {
    let mut samples = Vec::new();
    let mut runs = Vec::new();
    for &label in labels {
        let (s, r) = generate_category(cfg, role, label, per_label)?;
        samples.extend(s);
        runs.extend(r);
    }
    let domain = if role == Role::A {
        Domain::Source
    } else {
        Domain::Target
    };
    LabeledDataset::from_samples(role, domain, cfg.window, cfg.stride, &samples, runs)
}

/// Simulates, windows and normalizes the full bundle. Statistics come from
/// A alone; D is A's healthy subset and E a copy of B.
pub fn build_bundle(cfg: &BundleConfig) -> Result<DatasetBundle> {
    cfg.validate()?;
    let counts = cfg.scale.counts();
    let all: Vec<u8> = (1..=NUM_CLASSES as u8).collect();
    let raw_a = generate_dataset(cfg, Role::A, &all, counts.a_per_label)?;
    let raw_b = generate_dataset(cfg, Role::B, &[1], counts.b)?;
    let raw_probe = generate_dataset(cfg, Role::Probe, &[1], cfg.probe_windows)?;
    let raw_c = generate_dataset(cfg, Role::C, &all, counts.c_per_label)?;

    let test_seeds: HashSet<u64> = raw_c.episodes().iter().map(|r| r.seed).collect();
    let train_seeds = raw_b
        .episodes()
        .iter()
        .chain(raw_probe.episodes())
        .map(|r| r.seed);
    if train_seeds.into_iter().any(|s| test_seeds.contains(&s)) {
        return invalid(
            "target training and test sets share an episode seed; choose another bundle seed",
        );
    }

    let stats = NormalizationStats::compute(&raw_a)?;
    let a = normalize(&raw_a, &stats)?;
    let b = normalize(&raw_b, &stats)?;
    let probe = normalize(&raw_probe, &stats)?;
    let c = normalize(&raw_c, &stats)?;
    let d = a.subset_with_label(1, Role::D);
    let e = b.with_role(Role::E);
    Ok(DatasetBundle {
        config: cfg.clone(),
        stats,
        a,
        b,
        d,
        e,
        probe,
        c: SealedTestSet::new(c),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format_version: u32,
    pub config: BundleConfig,
    pub stats: NormalizationStats,
    pub counts: SplitCounts,
}

const ROLES: [Role; 6] = [Role::A, Role::B, Role::C, Role::D, Role::E, Role::Probe];

pub fn save_bundle(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = BundleManifest {
        format_version: BUNDLE_FORMAT_VERSION,
        config: bundle.config.clone(),
        stats: bundle.stats.clone(),
        counts: bundle.config.scale.counts(),
    };
    fs::write(
        dir.join("bundle.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    for ds in [
        &bundle.a,
        &bundle.b,
        &bundle.c.data,
        &bundle.d,
        &bundle.e,
        &bundle.probe,
    ] {
        save_dataset(dir, ds)?;
    }
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let path = dir.join("bundle.json");
    let manifest: BundleManifest = serde_json::from_slice(&fs::read(&path)?)?;
    if manifest.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "bundle format version {}",
            manifest.format_version
        )));
    }
    let mut sets = ROLES
        .iter()
        .map(|&r| load_dataset(dir, r))
        .collect::<Result<Vec<_>>>()?;
    for ds in &sets {
        if ds.normalization_id() != Some(manifest.stats.id.as_str()) {
            return Err(Error::Format(format!(
                "dataset {} not normalized with the bundle statistics",
                ds.role().name()
            )));
        }
    }
    let probe = sets.pop().unwrap();
    let e = sets.pop().unwrap();
    let d = sets.pop().unwrap();
    let c = sets.pop().unwrap();
    let b = sets.pop().unwrap();
    let a = sets.pop().unwrap();
    if e.values() != b.values() || d.labels().iter().any(|&l| l != 1) {
        return Err(Error::Format(
            "copies D/E do not match their sources".into(),
        ));
    }
    Ok(DatasetBundle {
        config: manifest.config,
        stats: manifest.stats,
        a,
        b,
        d,
        e,
        probe,
        c: SealedTestSet::new(c),
    })
}
