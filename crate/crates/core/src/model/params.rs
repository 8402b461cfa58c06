use super::config::ModelConfig;
use crate::error::{Result, VgsError};
use crate::numcore::gru::{GRU_NAMES, GRU_TENSORS};
use crate::numcore::params::scaled_uniform;
use crate::numcore::{GruWeights, ParamSet, Parameter, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSlots {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadSlots {
    /// 1-based GRU layer this head reads.
    pub layer: usize,
    pub w: usize,
    pub v: usize,
}

/// Slot indices of every model tensor inside the [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub image: AffineSlots,
    pub conv: AffineSlots,
    pub gru: Vec<[usize; GRU_TENSORS]>,
    pub heads: Vec<HeadSlots>,
}

/// Expected `(name, shape)` of every tensor, in storage order.
pub fn param_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = vec![
        (
            "image.w".to_string(),
            vec![config.image_dim, config.embed_dim],
        ),
        ("image.b".to_string(), vec![config.embed_dim]),
        (
            "conv.k".to_string(),
            vec![config.conv_kernel, config.mfcc_dim, config.conv_channels],
        ),
        ("conv.b".to_string(), vec![config.conv_channels]),
    ];
    let d_h = config.gru_hidden;
    for layer in 1..=config.gru_layers {
        let d_in = if layer == 1 {
            config.conv_channels
        } else {
            d_h
        };
        for (i, name) in GRU_NAMES.iter().enumerate() {
            let shape = match i % 3 {
                0 => vec![d_in, d_h],
                1 => vec![d_h, d_h],
                _ => vec![d_h],
            };
            out.push((format!("gru{layer}.{name}"), shape));
        }
    }
    for &layer in &config.attention_after_layers {
        out.push((format!("att{layer}.w"), vec![d_h, config.attention_dim()]));
        out.push((format!("att{layer}.v"), vec![config.attention_dim()]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub set: ParamSet,
    pub layout: Layout,
}

impl ModelParams {
    /// Scaled-uniform weights, zero biases; attention score vectors are
    /// treated as `[d_a, 1]` matrices for the init bound.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::derived(seed, "model/init");
        let mut set = ParamSet::new();
        for (name, shape) in param_shapes(config) {
            let value = if name.ends_with(".v") {
                let t = scaled_uniform(&[shape[0], 1], &mut rng);
                Tensor::new(shape, t.into_data())?
            } else if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                scaled_uniform(&shape, &mut rng)
            };
            set.push(Parameter::new(name, value))?;
        }
        Self::from_parts(config.clone(), set)
    }

    /// Rebuilds the layout from parameter names, checking every shape.
    pub fn from_parts(config: ModelConfig, set: ParamSet) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config);
        if expected.len() != set.len() {
            return Err(VgsError::config(
                "parameters",
                format!("expected {} tensors, found {}", expected.len(), set.len()),
            ));
        }
        for (name, shape) in &expected {
            let p = set
                .get(name)
                .ok_or_else(|| VgsError::config("parameters", format!("missing tensor {name}")))?;
            if p.value.shape() != shape.as_slice() {
                return Err(VgsError::Dimension {
                    op: "load parameters",
                    left: shape.clone(),
                    right: p.value.shape().to_vec(),
                });
            }
        }
        let slot = |n: &str| set.slot(n).expect("checked above");
        let layout = Layout {
            image: AffineSlots {
                w: slot("image.w"),
                b: slot("image.b"),
            },
            conv: AffineSlots {
                w: slot("conv.k"),
                b: slot("conv.b"),
            },
            gru: (1..=config.gru_layers)
                .map(|l| std::array::from_fn(|i| slot(&format!("gru{l}.{}", GRU_NAMES[i]))))
                .collect(),
            heads: config
                .attention_after_layers
                .iter()
                .map(|&layer| HeadSlots {
                    layer,
                    w: slot(&format!("att{layer}.w")),
                    v: slot(&format!("att{layer}.v")),
                })
                .collect(),
        };
        Ok(ModelParams {
            config,
            set,
            layout,
        })
    }

    pub fn value(&self, slot: usize) -> &Tensor {
        self.set.value(slot)
    }

    /// GRU weights of a 0-based layer.
    pub fn gru(&self, layer: usize) -> GruWeights<'_> {
        let slots = &self.layout.gru[layer];
        GruWeights::from_ordered(std::array::from_fn(|i| self.set.value(slots[i])))
    }

    pub fn grad_buffers(&self) -> Vec<Tensor> {
        self.set.grad_buffers()
    }
}
