//! Image and speech encoders, forward and backward.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{Combiner, ConvActivation, ModelConfig};
use super::params::{HeadSlots, ModelParams};
use crate::error::{Result, VgsError};
use crate::numcore::ops::{l2_normalize_slice, softmax_slice};
use crate::numcore::tensor::{dot, mat_vec_acc, outer_acc, vec_mat_acc};
use crate::numcore::{
    affine, affine_backward, conv1d, conv1d_backward, gru_backward, gru_forward,
    l2_normalize_backward, softmax_backward, GruGrads, GruTrace, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedImage {
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedUtterance {
    pub vector: Vec<f64>,
    /// Attention weights keyed by the 1-based GRU layer of each head.
    pub attention: BTreeMap<usize, Vec<f64>>,
    pub encoder_len: usize,
}

impl EncodedUtterance {
    /// Weights of the head after the last GRU layer.
    pub fn top_attention(&self) -> &[f64] {
        self.attention
            .values()
            .next_back()
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Cached activations of the image encoder.
#[derive(Debug, Clone)]
pub struct ImageTrace {
    input: Tensor,
    norm: f64,
    pub output: EncodedImage,
}

pub fn encode_image(feat: &Tensor, params: &ModelParams) -> Result<EncodedImage> {
    Ok(encode_image_traced(feat, params)?.output)
}

pub fn encode_image_traced(feat: &Tensor, params: &ModelParams) -> Result<ImageTrace> {
    let config = &params.config;
    if feat.len() != config.image_dim {
        return Err(VgsError::Dimension {
            op: "encode_image",
            left: feat.shape().to_vec(),
            right: vec![config.image_dim],
        });
    }
    let input = Tensor::matrix(1, config.image_dim, feat.data().to_vec())?;
    let slots = params.layout.image;
    let projected = affine(&input, params.value(slots.w), params.value(slots.b))?;
    let (vector, norm) = l2_normalize_slice(projected.data())?;
    Ok(ImageTrace {
        input,
        norm,
        output: EncodedImage { vector },
    })
}

/// Accumulates image-encoder gradients for upstream `d_vector`.
pub fn image_backward(
    params: &ModelParams,
    trace: &ImageTrace,
    d_vector: &[f64],
    grads: &mut [Tensor],
) {
    let slots = params.layout.image;
    let d_proj = l2_normalize_backward(&trace.output.vector, trace.norm, d_vector);
    let d_proj = Tensor::matrix(1, d_proj.len(), d_proj).expect("non-empty");
    let (dw, db) = pair_mut(grads, slots.w, slots.b);
    affine_backward(&trace.input, params.value(slots.w), &d_proj, dw, db);
}

/// Cached activations of one attention head.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    /// `tanh(h_t · W_a)`, `[T, d_a]`.
    hidden: Tensor,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
}

/// `s_t = v · tanh(h_t · W)`, `α = softmax(s)`, `context = Σ_t α_t h_t`.
pub fn attention_head(h: &Tensor, w: &Tensor, v: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = attention_forward(h, w, v)?;
    Ok((trace.weights, trace.context))
}

pub fn attention_forward(h: &Tensor, w: &Tensor, v: &Tensor) -> Result<HeadTrace> {
    if h.rank() != 2 || w.rank() != 2 || w.shape()[0] != h.cols() || v.len() != w.shape()[1] {
        return Err(VgsError::Dimension {
            op: "attention_head",
            left: h.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let (t_len, d_h, d_a) = (h.rows(), h.cols(), w.shape()[1]);
    let mut hidden = Tensor::zeros(&[t_len, d_a]);
    let scores: Vec<f64> = (0..t_len)
        .map(|t| {
            let row = hidden.row_mut(t);
            vec_mat_acc(h.row(t), w.data(), row);
            row.iter_mut().for_each(|a| *a = a.tanh());
            dot(row, v.data())
        })
        .collect();
    let weights = softmax_slice(&scores);
    let mut context = vec![0.0; d_h];
    for (t, a) in weights.iter().enumerate() {
        for (c, x) in context.iter_mut().zip(h.row(t)) {
            *c += a * x;
        }
    }
    Ok(HeadTrace {
        hidden,
        weights,
        context,
    })
}

/// Returns the gradient w.r.t. `h` and accumulates `dw`, `dv`.
pub fn attention_backward(
    h: &Tensor,
    w: &Tensor,
    v: &Tensor,
    trace: &HeadTrace,
    d_context: &[f64],
    dw: &mut Tensor,
    dv: &mut Tensor,
) -> Tensor {
    let t_len = h.rows();
    let mut dh = h.zeros_like();
    let d_alpha: Vec<f64> = (0..t_len).map(|t| dot(d_context, h.row(t))).collect();
    let d_scores = softmax_backward(&trace.weights, &d_alpha);
    let mut d_pre = vec![0.0; v.len()];
    for (t, &ds) in d_scores.iter().enumerate() {
        let a = trace.hidden.row(t);
        for (g, x) in dh.row_mut(t).iter_mut().zip(d_context) {
            *g += trace.weights[t] * x;
        }
        for (acc, ai) in dv.data_mut().iter_mut().zip(a) {
            *acc += ds * ai;
        }
        for ((dp, ai), vi) in d_pre.iter_mut().zip(a).zip(v.data()) {
            *dp = ds * vi * (1.0 - ai * ai);
        }
        outer_acc(h.row(t), &d_pre, dw.data_mut());
        mat_vec_acc(w.data(), &d_pre, dh.row_mut(t));
    }
    dh
}

/// Cached activations of the speech encoder.
#[derive(Debug, Clone)]
pub struct UtteranceTrace {
    conv_pre: Tensor,
    conv_out: Tensor,
    layers: Vec<GruTrace>,
    heads: Vec<HeadTrace>,
    combined: Vec<f64>,
    norm: f64,
    pub output: EncodedUtterance,
}

pub fn encode_utterance(mfcc: &Tensor, params: &ModelParams) -> Result<EncodedUtterance> {
    Ok(encode_utterance_traced(mfcc, params)?.output)
}

fn head_weights<'a>(params: &'a ModelParams, head: &HeadSlots) -> (&'a Tensor, &'a Tensor) {
    (params.value(head.w), params.value(head.v))
}

pub fn encode_utterance_traced(mfcc: &Tensor, params: &ModelParams) -> Result<UtteranceTrace> {
    let config = &params.config;
    if mfcc.rank() != 2 || mfcc.cols() != config.mfcc_dim {
        return Err(VgsError::Dimension {
            op: "encode_utterance",
            left: mfcc.shape().to_vec(),
            right: vec![config.mfcc_dim],
        });
    }
    let conv = params.layout.conv;
    let conv_pre = conv1d(
        mfcc,
        params.value(conv.w),
        params.value(conv.b),
        config.conv_stride,
    )?;
    let conv_out = match config.conv_activation {
        ConvActivation::Identity => conv_pre.clone(),
        ConvActivation::Relu => {
            let mut t = conv_pre.clone();
            t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            t
        }
    };

    let mut layers: Vec<GruTrace> = Vec::with_capacity(config.gru_layers);
    for l in 0..config.gru_layers {
        let input = if l == 0 {
            &conv_out
        } else {
            &layers[l - 1].states
        };
        let trace = gru_forward(input, &params.gru(l), None)?;
        layers.push(trace);
    }

    let mut heads = Vec::with_capacity(params.layout.heads.len());
    for head in &params.layout.heads {
        let (w, v) = head_weights(params, head);
        heads.push(attention_forward(&layers[head.layer - 1].states, w, v)?);
    }
    let combined = combine(config.combiner, &heads);
    let (vector, norm) = l2_normalize_slice(&combined)?;
    let attention = params
        .layout
        .heads
        .iter()
        .zip(&heads)
        .map(|(slots, h)| (slots.layer, h.weights.clone()))
        .collect();
    let encoder_len = conv_out.rows();
    Ok(UtteranceTrace {
        conv_pre,
        conv_out,
        layers,
        heads,
        combined,
        norm,
        output: EncodedUtterance {
            vector,
            attention,
            encoder_len,
        },
    })
}

fn combine(combiner: Combiner, heads: &[HeadTrace]) -> Vec<f64> {
    let mut out = heads[0].context.clone();
    for h in &heads[1..] {
        for (o, c) in out.iter_mut().zip(&h.context) {
            match combiner {
                Combiner::Product => *o *= c,
                Combiner::Sum => *o += c,
            }
        }
    }
    out
}

fn combine_backward(combiner: Combiner, heads: &[HeadTrace], d_out: &[f64]) -> Vec<Vec<f64>> {
    match combiner {
        Combiner::Sum => vec![d_out.to_vec(); heads.len()],
        Combiner::Product => (0..heads.len())
            .map(|k| {
                let mut g = d_out.to_vec();
                for (j, h) in heads.iter().enumerate() {
                    if j != k {
                        for (gi, c) in g.iter_mut().zip(&h.context) {
                            *gi *= c;
                        }
                    }
                }
                g
            })
            .collect(),
    }
}

/// Accumulates speech-encoder gradients for upstream `d_vector`.
pub fn utterance_backward(
    params: &ModelParams,
    mfcc: &Tensor,
    trace: &UtteranceTrace,
    d_vector: &[f64],
    grads: &mut [Tensor],
) {
    let config = &params.config;
    let d_combined = l2_normalize_backward(&trace.output.vector, trace.norm, d_vector);
    debug_assert_eq!(d_combined.len(), trace.combined.len());
    let d_contexts = combine_backward(config.combiner, &trace.heads, &d_combined);

    let mut d_states: Vec<Tensor> = trace.layers.iter().map(|l| l.states.zeros_like()).collect();
    for ((slots, head), d_ctx) in params
        .layout
        .heads
        .iter()
        .zip(&trace.heads)
        .zip(&d_contexts)
    {
        let (w, v) = head_weights(params, slots);
        let (dw, dv) = pair_mut(grads, slots.w, slots.v);
        let dh = attention_backward(
            &trace.layers[slots.layer - 1].states,
            w,
            v,
            head,
            d_ctx,
            dw,
            dv,
        );
        d_states[slots.layer - 1].add_assign(&dh);
    }

    let mut d_input = None;
    for l in (0..config.gru_layers).rev() {
        let mut upstream = std::mem::replace(&mut d_states[l], Tensor::zeros(&[1]));
        if let Some(d) = d_input.take() {
            upstream.add_assign(&d);
        }
        let input = if l == 0 {
            &trace.conv_out
        } else {
            &trace.layers[l - 1].states
        };
        let gw = params.gru(l);
        let mut g = GruGrads::zeros(gw.input_dim(), gw.hidden_dim());
        let dx = gru_backward(input, &trace.layers[l], &gw, &upstream, &mut g);
        for (slot, t) in params.layout.gru[l].iter().zip(&g.tensors) {
            grads[*slot].add_assign(t);
        }
        d_input = Some(dx);
    }

    let mut d_conv = d_input.expect("at least one GRU layer");
    if config.conv_activation == ConvActivation::Relu {
        for (g, pre) in d_conv.data_mut().iter_mut().zip(trace.conv_pre.data()) {
            if *pre <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let conv = params.layout.conv;
    let (dk, db) = pair_mut(grads, conv.w, conv.b);
    conv1d_backward(
        mfcc,
        params.value(conv.w),
        config.conv_stride,
        &d_conv,
        dk,
        db,
    );
}

/// Two distinct mutable elements of a slice.
fn pair_mut(items: &mut [Tensor], a: usize, b: usize) -> (&mut Tensor, &mut Tensor) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = items.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

/// Encoder length check with the caller's identifier attached.
pub fn check_utterance_len(config: &ModelConfig, frames: usize, caption_id: &str) -> Result<usize> {
    config.encoder_len(frames).map_err(|e| VgsError::Caption {
        caption_id: caption_id.to_string(),
        reason: e.to_string(),
    })
}
