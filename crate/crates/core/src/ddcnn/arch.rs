use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{NUM_CLASSES, NUM_ROWS};
use crate::error::{invalid, Error, Result};
use crate::nn::{LayerSpec, Sequential};

/// Which of the three compared models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Single branch: `tanh(φ(x))` straight into the classifier.
    #[serde(rename = "dcnn")]
    Dcnn,
    /// Twin branches and difference features, classification loss only.
    #[serde(rename = "ddcnn")]
    Ddcnn,
    /// Twin branches plus the domain-adaptation loss.
    #[serde(rename = "ddcnn-da")]
    DdcnnDa,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Dcnn, Variant::Ddcnn, Variant::DdcnnDa];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Dcnn => "dcnn",
            Variant::Ddcnn => "ddcnn",
            Variant::DdcnnDa => "ddcnn-da",
        }
    }

    pub fn uses_difference(self) -> bool {
        self != Variant::Dcnn
    }

    pub fn uses_da(self) -> bool {
        self == Variant::DdcnnDa
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown variant {s:?} (expected dcnn, ddcnn or ddcnn-da)"
                ))
            })
    }
}

/// Layer sizes of the extractor and classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub conv_channels: [usize; 3],
    pub conv_kernels: [usize; 3],
    pub pool: usize,
    pub feature_dim: usize,
    pub hidden: [usize; 2],
    pub dropout: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            conv_channels: [16, 32, 64],
            conv_kernels: [5, 3, 3],
            pool: 2,
            feature_dim: 64,
            hidden: [64, 32],
            dropout: 0.2,
        }
    }
}

impl ArchConfig {
    /// conv → ReLU → pool, three times, then flatten → dropout → dense.
    /// The feature layer is linear.
    pub fn extractor(&self, window: usize) -> Result<Sequential> {
        if !(0.0..1.0).contains(&self.dropout) {
            return invalid(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let mut layers = Vec::new();
        let mut channels = NUM_ROWS;
        let mut len = window;
        for (&out, &kernel) in self.conv_channels.iter().zip(&self.conv_kernels) {
            layers.push(LayerSpec::Conv1d {
                in_channels: channels,
                out_channels: out,
                kernel,
                stride: 1,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool1d { width: self.pool });
            if len < kernel {
                return invalid(format!(
                    "window {window} too short for the convolution stack"
                ));
            }
            len = (len - kernel + 1) / self.pool.max(1);
            channels = out;
        }
        if len == 0 {
            return invalid(format!(
                "window {window} too short for the convolution stack"
            ));
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dropout { p: self.dropout });
        layers.push(LayerSpec::Dense {
            inputs: channels * len,
            units: self.feature_dim,
        });
        Sequential::new(vec![NUM_ROWS, window], layers)
    }

    /// Two hidden ReLU layers and a 5-way output (softmax applied by the
    /// caller).
    pub fn classifier(&self) -> Result<Sequential> {
        let [h1, h2] = self.hidden;
        Sequential::new(
            vec![self.feature_dim],
            vec![
                LayerSpec::Dense {
                    inputs: self.feature_dim,
                    units: h1,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: h1,
                    units: h2,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    inputs: h2,
                    units: NUM_CLASSES,
                },
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let a = ArchConfig::default();
        let e = a.extractor(32).unwrap();
        assert_eq!(e.output_shape(), vec![64]);
        assert!(e.layers().contains(&LayerSpec::Dense {
            inputs: 128,
            units: 64
        }));
        assert_eq!(a.classifier().unwrap().output_shape(), vec![NUM_CLASSES]);
        assert!(a.extractor(12).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{v}\""));
        }
        assert!("ddcnn+da".parse::<Variant>().is_err());
    }
}
