//! Parameter checkpoint files.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "PFNNPARM"
//! version    u32      FORMAT_VERSION
//! spec_len   u32      length of the JSON network spec that follows
//! spec       bytes    {"input_shape": [...], "layers": [...]}
//! tensors    f32...   every parameter tensor in declaration order
//! ```
//!
//! A JSON sidecar (`<file>.json`) records tensor shapes and the creation seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::layers::Sequential;
use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PFNNPARM";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSidecar {
    pub format_version: u32,
    pub seed: u64,
    pub shapes: Vec<Vec<usize>>,
    pub num_elements: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode_params<F: Scalar>(net: &Sequential, params: &ParamSet<F>) -> Result<Vec<u8>> {
    net.check_params(params)?;
    let spec = serde_json::to_vec(net)?;
    let mut out = Vec::with_capacity(16 + spec.len() + 4 * params.num_elements());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_params<F: Scalar>(bytes: &[u8]) -> Result<(Sequential, ParamSet<F>)> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fmt("not a parameter checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let spec_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let spec_end = 16 + spec_len;
    if bytes.len() < spec_end {
        return Err(fmt("truncated network spec"));
    }
    let net: Sequential = serde_json::from_slice(&bytes[16..spec_end])?;
    let net = Sequential::new(net.input_shape().to_vec(), net.layers().to_vec())?;
    let shapes = net.param_shapes();
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let body = &bytes[spec_end..];
    if body.len() != 4 * total {
        return Err(Error::Format(format!(
            "expected {} parameter bytes, found {}",
            4 * total,
            body.len()
        )));
    }
    let mut floats = body
        .chunks_exact(4)
        .map(|c| F::of(f32::from_le_bytes(c.try_into().unwrap()) as f64));
    let tensors = shapes
        .iter()
        .map(|s| {
            let n = s.iter().product();
            Tensor::new(s.clone(), floats.by_ref().take(n).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((net, ParamSet::new(tensors)))
}

pub fn save_params<F: Scalar>(
    path: &Path,
    net: &Sequential,
    params: &ParamSet<F>,
    seed: u64,
) -> Result<()> {
    fs::write(path, encode_params(net, params)?)?;
    let sidecar = ParamSidecar {
        format_version: FORMAT_VERSION,
        seed,
        shapes: params.shapes(),
        num_elements: params.num_elements(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn load_params<F: Scalar>(path: &Path) -> Result<(Sequential, ParamSet<F>, ParamSidecar)> {
    let (net, params) = decode_params(&fs::read(path)?)?;
    let sidecar: ParamSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if sidecar.shapes != params.shapes() {
        return Err(Error::Format(
            "sidecar shapes disagree with checkpoint".into(),
        ));
    }
    Ok((net, params, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::LayerSpec;

    fn net() -> Sequential {
        Sequential::new(
            vec![3, 10],
            vec![
                LayerSpec::Conv1d {
                    in_channels: 3,
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 32,
                    units: 2,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let params: ParamSet<f32> = net().init_params(11);
        save_params(&path, &net(), &params, 11).unwrap();
        let (n2, p2, side) = load_params::<f32>(&path).unwrap();
        assert_eq!(n2, net());
        assert_eq!(p2, params);
        assert_eq!(side.seed, 11);
    }

    #[test]
    fn rejects_bad_magic_version_and_length() {
        let params: ParamSet<f32> = net().init_params(1);
        let bytes = encode_params(&net(), &params).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_params::<f32>(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(decode_params::<f32>(&bad).is_err());
        assert!(decode_params::<f32>(&bytes[..bytes.len() - 4]).is_err());
    }
}
