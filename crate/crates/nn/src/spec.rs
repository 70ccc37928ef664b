//! Architecture description and presets.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding: output = input − kernel + 1.
    Valid,
    /// Zero padding keeping the spatial size (extra row/column at the bottom/right).
    Same,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    /// `momentum` is the weight of the new batch in the running averages.
    BatchNorm { channels: usize, epsilon: f64, momentum: f64 },
    Relu,
    Dropout { rate: f64 },
    Flatten,
    Dense { out_features: usize },
    /// Terminal softmax; `forward` returns the logits before it.
    Softmax,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
        }
    }
}

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Input as (channels, height, width).
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// conv → batch norm → ReLU → dropout blocks, then dense 300 and the head.
    fn blocks(input: [usize; 3], filters: usize, blocks: usize, dropout: f64, hidden: usize, classes: usize) -> ModelSpec {
        let mut layers = Vec::new();
        for _ in 0..blocks {
            layers.push(LayerSpec::Conv2d {
                out_channels: filters,
                kernel_h: 5,
                kernel_w: 2,
                padding: Padding::Valid,
            });
            layers.push(LayerSpec::BatchNorm {
                channels: filters,
                epsilon: BN_EPSILON,
                momentum: BN_MOMENTUM,
            });
            layers.push(LayerSpec::Relu);
            if dropout > 0.0 {
                layers.push(LayerSpec::Dropout { rate: dropout });
            }
        }
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { out_features: hidden },
            LayerSpec::Relu,
            LayerSpec::Dense { out_features: classes },
            LayerSpec::Softmax,
        ]);
        ModelSpec { input, layers }
    }

    /// The published trunk: three blocks of 100 5×2 VALID filters with drop
    /// rate 0.5, dense 300, softmax head. No pooling.
    pub fn paper(input: [usize; 3], classes: usize) -> ModelSpec {
        ModelSpec::blocks(input, 100, 3, 0.5, 300, classes)
    }

    /// Same shape of network, narrower: two blocks of 32 filters, dense 64.
    /// Cheap enough for self-play on one core.
    pub fn small(input: [usize; 3], classes: usize) -> ModelSpec {
        ModelSpec::blocks(input, 32, 2, 0.25, 64, classes)
    }
}
