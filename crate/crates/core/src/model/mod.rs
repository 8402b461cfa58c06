//! Image encoder, attention-pooled speech encoder and the ranking loss.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod loss;
pub mod params;

use rayon::prelude::*;

pub use config::{Combiner, ConvActivation, ModelConfig};
pub use encoder::{attention_head, encode_image, encode_utterance, EncodedImage, EncodedUtterance};
pub use loss::{batch_loss, distance};
pub use params::ModelParams;

use crate::error::{Result, VgsError};
use crate::numcore::Tensor;

/// Loss over a batch of aligned (utterance features, image features) pairs
/// together with the gradient w.r.t. every parameter, in slot order.
///
/// Items are encoded and differentiated in parallel; each item owns its
/// gradient buffer and the buffers are summed in batch order, so the result
/// is bit-identical for any thread count.
pub fn loss_and_grad(
    params: &ModelParams,
    utterances: &[&Tensor],
    images: &[&Tensor],
) -> Result<(f64, Vec<Tensor>)> {
    if utterances.len() != images.len() {
        return Err(VgsError::Dimension {
            op: "loss_and_grad",
            left: vec![utterances.len()],
            right: vec![images.len()],
        });
    }
    let traces: Vec<(encoder::UtteranceTrace, encoder::ImageTrace)> = utterances
        .par_iter()
        .zip(images.par_iter())
        .map(|(u, i)| {
            Ok((
                encoder::encode_utterance_traced(u, params)?,
                encoder::encode_image_traced(i, params)?,
            ))
        })
        .collect::<Result<_>>()?;
    let u_vecs: Vec<&[f64]> = traces
        .iter()
        .map(|(u, _)| u.output.vector.as_slice())
        .collect();
    let i_vecs: Vec<&[f64]> = traces
        .iter()
        .map(|(_, i)| i.output.vector.as_slice())
        .collect();
    let lg = loss::batch_loss_grad(&u_vecs, &i_vecs, params.config.margin)?;

    let buffers: Vec<Vec<Tensor>> = traces
        .par_iter()
        .enumerate()
        .map(|(k, (ut, it))| {
            let mut buf = params.grad_buffers();
            encoder::utterance_backward(params, utterances[k], ut, &lg.d_utterances[k], &mut buf);
            encoder::image_backward(params, it, &lg.d_images[k], &mut buf);
            buf
        })
        .collect();
    let mut total = params.grad_buffers();
    for buf in &buffers {
        for (acc, g) in total.iter_mut().zip(buf) {
            acc.add_assign(g);
        }
    }
    Ok((lg.loss, total))
}

/// Loss only, without gradients.
pub fn batch_loss_of(
    params: &ModelParams,
    utterances: &[&Tensor],
    images: &[&Tensor],
) -> Result<f64> {
    let us: Vec<EncodedUtterance> = utterances
        .par_iter()
        .map(|u| encode_utterance(u, params))
        .collect::<Result<_>>()?;
    let is: Vec<EncodedImage> = images
        .par_iter()
        .map(|i| encode_image(i, params))
        .collect::<Result<_>>()?;
    let u_vecs: Vec<&[f64]> = us.iter().map(|u| u.vector.as_slice()).collect();
    let i_vecs: Vec<&[f64]> = is.iter().map(|i| i.vector.as_slice()).collect();
    batch_loss(&u_vecs, &i_vecs, params.config.margin)
}
