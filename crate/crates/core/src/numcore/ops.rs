//! Forward and backward passes of the dense primitives.
//!
//! Backward functions take the forward inputs (or cached outputs) together
//! with the upstream gradient, accumulate parameter gradients into the
//! supplied buffers, and return the gradient with respect to the input.

use super::tensor::{dot, mat_vec_acc, outer_acc, vec_mat_acc, Tensor};
use crate::error::{Result, VgsError};

/// Norms at or below this are treated as degenerate by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// `out[i, j] = Σ_k x[i, k] · w[k, j] + b[j]`.
pub fn affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_affine(x, w, b)?;
    let (n, d_out) = (x.rows(), w.shape()[1]);
    let mut out = Tensor::zeros(&[n, d_out]);
    for i in 0..n {
        let row = out.row_mut(i);
        row.copy_from_slice(b.data());
        vec_mat_acc(x.row(i), w.data(), row);
    }
    Ok(out)
}

fn check_affine(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<()> {
    if x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0] {
        return Err(VgsError::Dimension {
            op: "affine",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    if b.rank() != 1 || b.len() != w.shape()[1] {
        return Err(VgsError::Dimension {
            op: "affine bias",
            left: w.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Accumulates `dw`, `db` and returns `dx`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    d_out: &Tensor,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let mut dx = x.zeros_like();
    for i in 0..x.rows() {
        let g = d_out.row(i);
        outer_acc(x.row(i), g, dw.data_mut());
        for (acc, v) in db.data_mut().iter_mut().zip(g) {
            *acc += v;
        }
        mat_vec_acc(w.data(), g, dx.row_mut(i));
    }
    dx
}

pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(VgsError::config(
            "conv",
            "kernel and stride must be at least 1",
        ));
    }
    if len < kernel {
        return Err(VgsError::InputTooShort { len, kernel });
    }
    Ok((len - kernel) / stride + 1)
}

/// Valid (unpadded) strided convolution over time.
///
/// `x` is `[T, d_in]`, `k` is `[width, d_in, d_out]`, `b` is `[d_out]`.
pub fn conv1d(x: &Tensor, k: &Tensor, b: &Tensor, stride: usize) -> Result<Tensor> {
    if x.rank() != 2 || k.rank() != 3 || k.shape()[1] != x.shape()[1] {
        return Err(VgsError::Dimension {
            op: "conv1d",
            left: x.shape().to_vec(),
            right: k.shape().to_vec(),
        });
    }
    let (width, d_in, d_out) = (k.shape()[0], k.shape()[1], k.shape()[2]);
    if b.rank() != 1 || b.len() != d_out {
        return Err(VgsError::Dimension {
            op: "conv1d bias",
            left: k.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let t_out = conv1d_output_len(x.rows(), width, stride)?;
    let mut out = Tensor::zeros(&[t_out, d_out]);
    let xs = x.data();
    for t in 0..t_out {
        let row = out.row_mut(t);
        row.copy_from_slice(b.data());
        // The window x[t·stride .. t·stride + width] is contiguous, and so is
        // the kernel viewed as [width·d_in, d_out].
        let start = t * stride * d_in;
        vec_mat_acc(&xs[start..start + width * d_in], k.data(), row);
    }
    Ok(out)
}

/// Accumulates `dk`, `db` and returns `dx`.
pub fn conv1d_backward(
    x: &Tensor,
    k: &Tensor,
    stride: usize,
    d_out: &Tensor,
    dk: &mut Tensor,
    db: &mut Tensor,
) -> Tensor {
    let (width, d_in) = (k.shape()[0], k.shape()[1]);
    let mut dx = x.zeros_like();
    let xs = x.data();
    for t in 0..d_out.rows() {
        let g = d_out.row(t);
        let start = t * stride * d_in;
        let span = start..start + width * d_in;
        outer_acc(&xs[span.clone()], g, dk.data_mut());
        for (acc, v) in db.data_mut().iter_mut().zip(g) {
            *acc += v;
        }
        mat_vec_acc(k.data(), g, &mut dx.data_mut()[span]);
    }
    dx
}

/// Numerically stable softmax over a slice.
pub fn softmax_slice(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

pub fn softmax(s: &Tensor) -> Result<Tensor> {
    if !s.all_finite() {
        return Err(VgsError::NonFinite("softmax input".into()));
    }
    Ok(Tensor::vector(softmax_slice(s.data())))
}

/// Gradient w.r.t. the scores given the softmax output `y` and `dy`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let inner = dot(y, dy);
    y.iter().zip(dy).map(|(yi, gi)| yi * (gi - inner)).collect()
}

/// Returns `(v / ‖v‖, ‖v‖)`.
pub fn l2_normalize_slice(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let norm = dot(v, v).sqrt();
    if !norm.is_finite() {
        return Err(VgsError::NonFinite("l2_normalize input".into()));
    }
    if norm <= NORM_EPS {
        return Err(VgsError::DegenerateVector { norm });
    }
    Ok((v.iter().map(|x| x / norm).collect(), norm))
}

pub fn l2_normalize(v: &Tensor) -> Result<Tensor> {
    let (out, _) = l2_normalize_slice(v.data())?;
    Ok(Tensor::vector(out))
}

/// Gradient w.r.t. `v` given the normalized output `y = v / norm` and `dy`.
pub fn l2_normalize_backward(y: &[f64], norm: f64, dy: &[f64]) -> Vec<f64> {
    let inner = dot(y, dy);
    y.iter()
        .zip(dy)
        .map(|(yi, gi)| (gi - yi * inner) / norm)
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn affine_identity() {
        let x = Tensor::identity(2);
        let out = affine(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(out, Tensor::identity(2));
    }

    #[test]
    fn affine_hand_computed() {
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]);
        assert_eq!(affine(&x, &w, &b).unwrap().data(), &[3.5]);
    }

    #[test]
    fn affine_zero_weights_annihilate() {
        let x = Tensor::matrix(3, 2, vec![1.0, -2.0, 3.0, 0.5, 9.0, 1.0]).unwrap();
        let out = affine(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[4])).unwrap();
        assert_eq!(out, Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let x = Tensor::zeros(&[1, 3]);
        let err = affine(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
    }

    #[test]
    fn conv_lengths() {
        assert_eq!(conv1d_output_len(6, 6, 2).unwrap(), 1);
        assert_eq!(conv1d_output_len(13, 6, 2).unwrap(), 4);
        assert!(matches!(
            conv1d_output_len(5, 6, 2),
            Err(VgsError::InputTooShort { len: 5, kernel: 6 })
        ));
    }

    #[test]
    fn conv_hand_computed() {
        let x = Tensor::filled(&[4, 1], 1.0);
        let k = Tensor::filled(&[2, 1, 1], 1.0);
        let out = conv1d(&x, &k, &Tensor::zeros(&[1]), 2).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.data(), &[2.0, 2.0]);
    }

    #[test]
    fn conv_too_short_error() {
        let x = Tensor::zeros(&[3, 2]);
        let k = Tensor::zeros(&[4, 2, 1]);
        assert!(matches!(
            conv1d(&x, &k, &Tensor::zeros(&[1]), 1),
            Err(VgsError::InputTooShort { len: 3, kernel: 4 })
        ));
    }

    #[test]
    fn softmax_examples() {
        let uniform = softmax(&Tensor::filled(&[5], 3.3)).unwrap();
        assert!(close(uniform.data(), &[0.2; 5], 1e-15));
        let two = softmax(&Tensor::vector(vec![0.0, 3f64.ln()])).unwrap();
        assert!(close(two.data(), &[0.25, 0.75], 1e-15));
        let s = Tensor::vector(vec![0.3, -1.2, 2.0]);
        let shifted = Tensor::vector(vec![100.3, 98.8, 102.0]);
        assert!(close(
            softmax(&s).unwrap().data(),
            softmax(&shifted).unwrap().data(),
            1e-12
        ));
    }

    #[test]
    fn l2_examples() {
        let out = l2_normalize(&Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert!(close(out.data(), &[0.6, 0.8], 1e-15));
        let again = l2_normalize(&out).unwrap();
        assert!(close(again.data(), out.data(), 1e-15));
        assert!(matches!(
            l2_normalize(&Tensor::vector(vec![0.0, 0.0])),
            Err(VgsError::DegenerateVector { .. })
        ));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
