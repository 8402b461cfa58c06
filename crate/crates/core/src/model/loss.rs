//! Cosine distance and the bidirectional margin ranking loss.

use crate::error::{Result, VgsError};
use crate::numcore::dot;

/// `1 − ⟨u, i⟩` for unit vectors; lies in `[0, 2]`.
pub fn distance(u: &[f64], i: &[f64]) -> f64 {
    1.0 - dot(u, i)
}

/// Loss value and its gradient w.r.t. every utterance and image vector.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub d_utterances: Vec<Vec<f64>>,
    pub d_images: Vec<Vec<f64>>,
}

/// Sum over aligned pairs `(u_k, i_k)` of the hinge terms against every
/// other utterance of the batch (for image `i_k`) and every other image
/// (for utterance `u_k`):
///
/// ```text
/// Σ_k Σ_{j≠k} max(0, α + d(u_k,i_k) − d(u_j,i_k)) + max(0, α + d(u_k,i_k) − d(u_k,i_j))
/// ```
pub fn batch_loss(utterances: &[&[f64]], images: &[&[f64]], margin: f64) -> Result<f64> {
    Ok(batch_loss_grad(utterances, images, margin)?.loss)
}

pub fn batch_loss_grad(utterances: &[&[f64]], images: &[&[f64]], margin: f64) -> Result<LossGrad> {
    let n = utterances.len();
    if images.len() != n {
        return Err(VgsError::Dimension {
            op: "batch_loss",
            left: vec![n],
            right: vec![images.len()],
        });
    }
    // dist[a][b] = d(u_a, i_b)
    let dist: Vec<Vec<f64>> = utterances
        .iter()
        .map(|u| images.iter().map(|i| distance(u, i)).collect())
        .collect();
    let (loss, d_dist) = hinge_loss(&dist, margin)?;
    let dim = utterances[0].len();
    let mut d_utterances = vec![vec![0.0; dim]; n];
    let mut d_images = vec![vec![0.0; dim]; n];
    for a in 0..n {
        for b in 0..n {
            let g = d_dist[a][b];
            if g == 0.0 {
                continue;
            }
            // d(u,i) = 1 − u·i
            for (du, iv) in d_utterances[a].iter_mut().zip(images[b]) {
                *du -= g * iv;
            }
            for (di, uv) in d_images[b].iter_mut().zip(utterances[a]) {
                *di -= g * uv;
            }
        }
    }
    Ok(LossGrad {
        loss,
        d_utterances,
        d_images,
    })
}

/// The ranking loss on a square distance matrix `dist[a][b] = d(u_a, i_b)`,
/// with its gradient w.r.t. every entry.
pub fn hinge_loss(dist: &[Vec<f64>], margin: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = dist.len();
    if n == 0 {
        return Err(VgsError::EmptyBatch);
    }
    let mut d_dist = vec![vec![0.0; n]; n];
    let mut loss = 0.0;
    for k in 0..n {
        let matched = dist[k][k];
        for j in (0..n).filter(|&j| j != k) {
            let h_utt = margin + matched - dist[j][k];
            if h_utt > 0.0 {
                loss += h_utt;
                d_dist[k][k] += 1.0;
                d_dist[j][k] -= 1.0;
            }
            let h_img = margin + matched - dist[k][j];
            if h_img > 0.0 {
                loss += h_img;
                d_dist[k][k] += 1.0;
                d_dist[k][j] -= 1.0;
            }
        }
    }
    Ok((loss, d_dist))
}
