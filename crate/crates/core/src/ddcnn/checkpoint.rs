//! Model directories: `model.json`, the extractor and head parameter files,
//! and `reference.json` for the twin variants.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{ArchConfig, Variant};
use super::model::{HealthyReference, Model};
use crate::error::{invalid, Error, Result};
use crate::nn::checkpoint::{load_params, save_params};
use crate::nn::Scalar;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    pub variant: Variant,
    pub arch: ArchConfig,
    pub window: usize,
    pub normalization_id: String,
    pub phi_fingerprint: String,
    pub seed: u64,
}

pub const REFERENCE_FILE: &str = "reference.json";

/// Writes the model (and its reference, if any) into `dir`. Weights are
/// stored as f32.
pub fn save_model<F: Scalar>(
    dir: &Path,
    model: &Model<F>,
    reference: Option<&HealthyReference>,
    seed: u64,
) -> Result<()> {
    if reference.is_some_and(|r| r.params_fingerprint != model.fingerprint()) {
        return invalid("reference belongs to different extractor weights");
    }
    fs::create_dir_all(dir)?;
    let manifest = ModelManifest {
        format_version: MODEL_FORMAT_VERSION,
        variant: model.variant,
        arch: model.arch.clone(),
        window: model.window,
        normalization_id: model.normalization_id.clone(),
        phi_fingerprint: model.fingerprint(),
        seed,
    };
    fs::write(
        dir.join("model.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    save_params(&dir.join("phi.bin"), &model.extractor, &model.phi, seed)?;
    save_params(&dir.join("head.bin"), &model.classifier, &model.head, seed)?;
    if let Some(r) = reference {
        fs::write(dir.join(REFERENCE_FILE), serde_json::to_vec_pretty(r)?)?;
    }
    Ok(())
}

pub fn load_model<F: Scalar>(
    dir: &Path,
) -> Result<(Model<F>, Option<HealthyReference>, ModelManifest)> {
    let manifest: ModelManifest = serde_json::from_slice(&fs::read(dir.join("model.json"))?)?;
    if manifest.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "model format version {}",
            manifest.format_version
        )));
    }
    let (extractor, phi, _) = load_params::<F>(&dir.join("phi.bin"))?;
    let (classifier, head, _) = load_params::<F>(&dir.join("head.bin"))?;
    if extractor != manifest.arch.extractor(manifest.window)?
        || classifier != manifest.arch.classifier()?
    {
        return Err(Error::Format(
            "stored networks do not match the recorded architecture".into(),
        ));
    }
    let model = Model {
        variant: manifest.variant,
        arch: manifest.arch.clone(),
        window: manifest.window,
        extractor,
        classifier,
        phi,
        head,
        normalization_id: manifest.normalization_id.clone(),
    };
    if model.fingerprint() != manifest.phi_fingerprint {
        return Err(Error::Format(
            "extractor weights do not match the manifest fingerprint".into(),
        ));
    }
    let ref_path = dir.join(REFERENCE_FILE);
    let reference = if ref_path.exists() {
        let r: HealthyReference = serde_json::from_slice(&fs::read(ref_path)?)?;
        if r.params_fingerprint != manifest.phi_fingerprint {
            return Err(Error::Format(
                "reference belongs to different extractor weights".into(),
            ));
        }
        Some(r)
    } else {
        None
    };
    Ok((model, reference, manifest))
}
