use serde::{Deserialize, Serialize};

use crate::error::{Result, VgsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConvActivation {
    #[default]
    Identity,
    Relu,
}

/// How the context vectors of several attention heads are merged into one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Element-wise product.
    #[default]
    Product,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_dim: usize,
    pub embed_dim: usize,
    pub mfcc_dim: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub conv_channels: usize,
    pub conv_activation: ConvActivation,
    pub gru_layers: usize,
    /// Must equal `embed_dim`: the pooled GRU state is the utterance embedding.
    pub gru_hidden: usize,
    /// Width of the attention scoring layer; `None` means `gru_hidden`.
    pub attention_dim: Option<usize>,
    /// 1-based GRU layers followed by an attention head.
    pub attention_after_layers: Vec<usize>,
    pub combiner: Combiner,
    pub margin: f64,
    pub frame_hop_ms: f64,
}

impl Default for ModelConfig {
    /// Full architecture with a desk-scale image feature size.
    fn default() -> Self {
        ModelConfig {
            image_dim: 64,
            embed_dim: 512,
            mfcc_dim: 13,
            conv_kernel: 6,
            conv_stride: 2,
            conv_channels: 64,
            conv_activation: ConvActivation::Identity,
            gru_layers: 5,
            gru_hidden: 512,
            attention_dim: None,
            attention_after_layers: vec![1, 5],
            combiner: Combiner::Product,
            margin: 0.2,
            frame_hop_ms: 10.0,
        }
    }
}

impl ModelConfig {
    /// The full-size configuration with 4096-dimensional VGG-16 inputs.
    pub fn full_scale() -> Self {
        ModelConfig {
            image_dim: 4096,
            ..Default::default()
        }
    }

    /// A small configuration with `layers` GRU layers and attention after
    /// the first and last of them.
    pub fn small(image_dim: usize, embed_dim: usize, layers: usize) -> Self {
        let mut heads = vec![1, layers];
        heads.dedup();
        ModelConfig {
            image_dim,
            embed_dim,
            gru_hidden: embed_dim,
            gru_layers: layers,
            attention_after_layers: heads,
            ..Default::default()
        }
    }

    pub fn attention_dim(&self) -> usize {
        self.attention_dim.unwrap_or(self.gru_hidden)
    }

    /// The head whose weights the analysis reads by default (after the last layer).
    pub fn top_layer(&self) -> usize {
        self.gru_layers
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("image_dim", self.image_dim),
            ("embed_dim", self.embed_dim),
            ("mfcc_dim", self.mfcc_dim),
            ("conv_kernel", self.conv_kernel),
            ("conv_stride", self.conv_stride),
            ("conv_channels", self.conv_channels),
            ("gru_layers", self.gru_layers),
            ("gru_hidden", self.gru_hidden),
            ("attention_dim", self.attention_dim()),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(VgsError::config(field, "must be at least 1"));
            }
        }
        if self.gru_hidden != self.embed_dim {
            return Err(VgsError::config(
                "gru_hidden",
                format!(
                    "must equal embed_dim ({} != {})",
                    self.gru_hidden, self.embed_dim
                ),
            ));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(VgsError::config(
                "margin",
                "must be a finite non-negative number",
            ));
        }
        if !(self.frame_hop_ms > 0.0 && self.frame_hop_ms.is_finite()) {
            return Err(VgsError::config("frame_hop_ms", "must be positive"));
        }
        let layers = &self.attention_after_layers;
        if layers.iter().any(|&l| l == 0 || l > self.gru_layers) {
            return Err(VgsError::config(
                "attention_after_layers",
                format!("entries must lie in 1..={}", self.gru_layers),
            ));
        }
        if !layers.contains(&self.gru_layers) {
            return Err(VgsError::config(
                "attention_after_layers",
                "must include the last GRU layer",
            ));
        }
        if layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VgsError::config(
                "attention_after_layers",
                "must be strictly increasing",
            ));
        }
        Ok(())
    }

    /// Encoder steps produced from `frames` input frames.
    pub fn encoder_len(&self, frames: usize) -> Result<usize> {
        crate::numcore::conv1d_output_len(frames, self.conv_kernel, self.conv_stride)
    }
}
