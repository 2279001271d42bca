use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{BoundParams, Graph, NodeId};
use super::params::ParamSet;
use super::tensor::{Scalar, Tensor};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    MaxPool1d {
        width: usize,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    Tanh,
    Relu,
    Dropout {
        p: f64,
    },
    Flatten,
}

impl LayerSpec {
    /// Shapes of this layer's parameters (weights then bias).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                vec![vec![out_channels, in_channels, kernel], vec![out_channels]]
            }
            LayerSpec::Dense { inputs, units } => vec![vec![units, inputs], vec![units]],
            _ => Vec::new(),
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    /// Per-sample output shape, or a validation error when `input` does not fit.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
            } => {
                if kernel == 0 || stride == 0 {
                    return invalid("conv1d kernel width and stride must be >= 1");
                }
                match input {
                    [c, l] if *c == in_channels && *l >= kernel => {
                        Ok(vec![out_channels, (l - kernel) / stride + 1])
                    }
                    _ => invalid(format!(
                        "conv1d({in_channels}->{out_channels}, k={kernel}) cannot take input {input:?}"
                    )),
                }
            }
            LayerSpec::MaxPool1d { width } => {
                if width == 0 {
                    return invalid("maxpool width must be >= 1");
                }
                match input {
                    [c, l] if *l >= width => Ok(vec![*c, l / width]),
                    _ => invalid(format!(
                        "maxpool(width={width}) cannot take input {input:?}"
                    )),
                }
            }
            LayerSpec::Dense { inputs, units } => match input {
                [n] if *n == inputs => Ok(vec![units]),
                _ => invalid(format!(
                    "dense({inputs}->{units}) cannot take input {input:?}"
                )),
            },
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(&p) {
                    return invalid(format!("drop probability {p} outside [0,1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Tanh | LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

/// A validated chain of layers over per-sample shape `input_shape`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequential {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
}

impl Sequential {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for layer in &layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(Self {
            input_shape,
            layers,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers
            .iter()
            .try_fold(self.input_shape.clone(), |s, l| l.output_shape(&s))
            .expect("validated at construction")
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(LayerSpec::param_shapes)
            .collect()
    }

    /// Fan-in scaled uniform weights, `U(-a, a)` with `a = sqrt(6 / fan_in)`
    /// (variance `2 / fan_in`); biases zero. Values are drawn in f64 and then
    /// rounded, so f32 and f64 sets from one seed agree to f32 precision.
    pub fn init_params<F: Scalar>(&self, seed: u64) -> ParamSet<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Vec::new();
        for layer in &self.layers {
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let a = (6.0 / layer.fan_in() as f64).sqrt();
            let wshape = &shapes[0];
            let n: usize = wshape.iter().product();
            let w = (0..n).map(|_| F::of(rng.gen_range(-a..a))).collect();
            tensors.push(Tensor::new(wshape.clone(), w).expect("shape from spec"));
            tensors.push(Tensor::zeros(&shapes[1]));
        }
        ParamSet::new(tensors)
    }

    pub fn check_params<F: Scalar>(&self, params: &ParamSet<F>) -> Result<()> {
        if params.shapes() != self.param_shapes() {
            return invalid(format!(
                "parameter shapes {:?} do not match network {:?}",
                params.shapes(),
                self.param_shapes()
            ));
        }
        Ok(())
    }

    /// Runs the chain on a batch node of shape `[N, ..input_shape]`.
    pub fn forward<F: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<F>,
        x: NodeId,
        params: &BoundParams,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        let ids = params.ids();
        if ids.len() != self.param_shapes().len() {
            return invalid("bound parameter count does not match network");
        }
        let mut cursor = 0;
        let mut h = x;
        for layer in &self.layers {
            h = match *layer {
                LayerSpec::Conv1d { stride, .. } => {
                    let out = g.conv1d(h, ids[cursor], ids[cursor + 1], stride)?;
                    cursor += 2;
                    out
                }
                LayerSpec::Dense { .. } => {
                    let out = g.linear(h, ids[cursor], ids[cursor + 1])?;
                    cursor += 2;
                    out
                }
                LayerSpec::MaxPool1d { width } => g.maxpool1d(h, width)?,
                LayerSpec::Relu => g.relu(h),
                LayerSpec::Tanh => g.tanh(h),
                LayerSpec::Dropout { p } => match mode {
                    Mode::Train if p > 0.0 => g.dropout(h, p, rng)?,
                    _ => h,
                },
                LayerSpec::Flatten => {
                    let n = g.value(h).shape()[0];
                    let rest: usize = g.value(h).shape()[1..].iter().product();
                    g.reshape(h, vec![n, rest])?
                }
            };
        }
        Ok(h)
    }
}
