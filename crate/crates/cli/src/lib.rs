//! Command implementations behind the `propfault` binary.
//!
//! Every command writes the resolved configuration that produced its outputs
//! as `config.toml` next to them. Outputs are byte-reproducible for a given
//! configuration; wall-clock times go to a separate `timing.log`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::info;
use propfault_core::dataset::{
    build_bundle, load_bundle, save_bundle, BundleConfig, DatasetBundle,
};
use propfault_core::ddcnn::{
    class_signatures, compute_healthy_reference, load_model, save_model, ClassSignature,
};
use propfault_core::training::{
    run_comparison, train_with_precision, write_comparison, write_run, TrainConfig,
};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.toml";
pub const TIMING_FILE: &str = "timing.log";

/// Everything a command can be configured with. Unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    /// Simulator, domain shift and dataset layout.
    pub dataset: BundleConfig,
    pub train: TrainConfig,
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ValidationError(format!("config: {e}")).into())
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), self.to_toml()?)?;
        Ok(())
    }
}

/// Bad input rather than a failed run; maps to exit code 1.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::error::Error for ValidationError {}

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// 1 for validation problems anywhere in the chain, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ValidationError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<propfault_core::Error>() {
            if e.is_validation() {
                return 1;
            }
        }
    }
    2
}

fn write_timing(dir: &Path, what: &str, start: Instant) -> Result<()> {
    fs::write(
        dir.join(TIMING_FILE),
        format!("{what} {:.3} s\n", start.elapsed().as_secs_f64()),
    )?;
    Ok(())
}

fn open_bundle(dir: &Path) -> Result<DatasetBundle> {
    if !dir.join("bundle.json").is_file() {
        bail!(
            "no dataset bundle at {} (run `simulate` first)",
            dir.display()
        );
    }
    load_bundle(dir).with_context(|| format!("loading bundle {}", dir.display()))
}

/// Builds and saves the A–E bundle.
pub fn simulate(cfg: &CliConfig, out: &Path) -> Result<DatasetBundle> {
    cfg.validate()?;
    let start = Instant::now();
    let bundle = build_bundle(&cfg.dataset)?;
    save_bundle(out, &bundle).with_context(|| format!("writing bundle to {}", out.display()))?;
    cfg.write_to(out)?;
    write_timing(out, "simulate", start)?;
    info!(
        "bundle written to {}: A {}, B {}, C {}",
        out.display(),
        bundle.a.len(),
        bundle.b.len(),
        bundle.c.len()
    );
    Ok(bundle)
}

/// Trains one variant and writes the checkpoint, reference and run outputs.
/// The dataset section of the saved config is the bundle's own.
pub fn train(
    cfg: &CliConfig,
    bundle_dir: &Path,
    out: &Path,
) -> Result<propfault_core::training::RunResult> {
    cfg.train.validate()?;
    let bundle = open_bundle(bundle_dir)?;
    let resolved = CliConfig {
        dataset: bundle.config.clone(),
        train: cfg.train.clone(),
    };
    let start = Instant::now();
    let (trained, result) = train_with_precision(&cfg.train, &bundle)?;
    save_model(
        out,
        &trained.model,
        trained.reference.as_ref(),
        cfg.train.seed,
    )?;
    write_run(out, &result)?;
    resolved.write_to(out)?;
    write_timing(out, "train", start)?;
    info!(
        "{} seed {}: accuracy {:.4}",
        cfg.train.variant, cfg.train.seed, result.accuracy
    );
    Ok(result)
}

/// All three variants over `seeds`. Fails (after writing the report) when any
/// run failed.
pub fn compare(
    cfg: &CliConfig,
    bundle_dir: &Path,
    seeds: &[u64],
    out: &Path,
) -> Result<propfault_core::training::ComparisonReport> {
    cfg.train.validate()?;
    let bundle = open_bundle(bundle_dir)?;
    let resolved = CliConfig {
        dataset: bundle.config.clone(),
        train: cfg.train.clone(),
    };
    let start = Instant::now();
    let report = run_comparison(&cfg.train, &bundle, seeds)?;
    write_comparison(out, &report)?;
    resolved.write_to(out)?;
    write_timing(out, "compare", start)?;
    for s in &report.summaries {
        info!(
            "{}: mean {:.4} std {:.4} over {} runs",
            s.variant, s.mean_accuracy, s.std_accuracy, s.runs
        );
    }
    if report.any_failed() {
        bail!(
            "{} comparison run(s) failed; see comparison.json",
            report.cells.iter().filter(|c| c.error.is_some()).count()
        );
    }
    Ok(report)
}

/// One CSV row per (domain, label, feature index).
pub fn features_csv(groups: &[(&str, Vec<ClassSignature>)]) -> String {
    let mut out = String::from("label,feature,mean,std,domain,peak_abs_mean\n");
    for (domain, sigs) in groups {
        for s in sigs {
            let pv = s.peak_value();
            for (k, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
                writeln!(out, "{},{},{},{},{},{}", s.label, k, m, sd, domain, pv).unwrap();
            }
        }
    }
    out
}

/// Difference-feature statistics per class: source windows against the
/// healthy source mean, target test windows against the stored reference.
pub fn export_features(checkpoint: &Path, bundle_dir: &Path, out: &Path) -> Result<PathBuf> {
    let (model, reference, manifest) = load_model::<f32>(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    if !manifest.variant.uses_difference() {
        return Err(ValidationError(format!(
            "unsupported variant {}: export-features needs a difference-feature model",
            manifest.variant
        ))
        .into());
    }
    let Some(reference) = reference else {
        bail!(
            "checkpoint {} has no healthy reference",
            checkpoint.display()
        );
    };
    let bundle = open_bundle(bundle_dir)?;
    let source_ref = compute_healthy_reference(&model, &bundle.d)?;
    let source = class_signatures(&model, &source_ref, &bundle.a)?;
    let target = class_signatures(&model, &reference, bundle.c.open_for_evaluation())?;
    fs::create_dir_all(out)?;
    let path = out.join("features.csv");
    fs::write(
        &path,
        features_csv(&[("source", source), ("target", target)]),
    )?;
    // the checkpoint's own config carries the training settings
    let train = match fs::read_to_string(checkpoint.join(CONFIG_FILE)) {
        Ok(text) => CliConfig::from_toml(&text)?.train,
        Err(_) => TrainConfig {
            variant: manifest.variant,
            seed: manifest.seed,
            ..TrainConfig::default()
        },
    };
    CliConfig {
        dataset: bundle.config.clone(),
        train,
    }
    .write_to(out)?;
    info!("features written to {}", path.display());
    Ok(path)
}
