//! Gated recurrent unit with back-propagation through time.
//!
//! Row-vector convention: input weights are `[d_in, d_h]`, recurrent
//! weights `[d_h, d_h]`, so a gate pre-activation is `x·W + h·U + b`.
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h~ = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h~
//! ```

use super::ops::sigmoid;
use super::tensor::{mat_vec_acc, outer_acc, vec_mat_acc, Tensor};
use crate::error::{Result, VgsError};

/// Number of parameter tensors in one GRU layer.
pub const GRU_TENSORS: usize = 9;

/// Names of the per-layer tensors, in storage order.
pub const GRU_NAMES: [&str; GRU_TENSORS] = [
    "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h",
];

#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_z: &'a Tensor,
    pub u_z: &'a Tensor,
    pub b_z: &'a Tensor,
    pub w_r: &'a Tensor,
    pub u_r: &'a Tensor,
    pub b_r: &'a Tensor,
    pub w_h: &'a Tensor,
    pub u_h: &'a Tensor,
    pub b_h: &'a Tensor,
}

impl<'a> GruWeights<'a> {
    /// Builds a view from tensors in [`GRU_NAMES`] order.
    pub fn from_ordered(t: [&'a Tensor; GRU_TENSORS]) -> Self {
        GruWeights {
            w_z: t[0],
            u_z: t[1],
            b_z: t[2],
            w_r: t[3],
            u_r: t[4],
            b_r: t[5],
            w_h: t[6],
            u_h: t[7],
            b_h: t[8],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.u_z.shape()[0]
    }

    fn validate(&self) -> Result<()> {
        let (d_in, d_h) = (self.input_dim(), self.hidden_dim());
        let checks: [(&Tensor, &[usize]); GRU_TENSORS] = [
            (self.w_z, &[d_in, d_h]),
            (self.u_z, &[d_h, d_h]),
            (self.b_z, &[d_h]),
            (self.w_r, &[d_in, d_h]),
            (self.u_r, &[d_h, d_h]),
            (self.b_r, &[d_h]),
            (self.w_h, &[d_in, d_h]),
            (self.u_h, &[d_h, d_h]),
            (self.b_h, &[d_h]),
        ];
        for (t, want) in checks {
            if t.shape() != want {
                return Err(VgsError::Dimension {
                    op: "gru weights",
                    left: want.to_vec(),
                    right: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

/// Owned gradient buffers matching [`GruWeights`].
#[derive(Debug, Clone)]
pub struct GruGrads {
    pub tensors: [Tensor; GRU_TENSORS],
}

impl GruGrads {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        let m_in = || Tensor::zeros(&[d_in, d_h]);
        let m_h = || Tensor::zeros(&[d_h, d_h]);
        let v = || Tensor::zeros(&[d_h]);
        GruGrads {
            tensors: [m_in(), m_h(), v(), m_in(), m_h(), v(), m_in(), m_h(), v()],
        }
    }
}

/// Forward activations of one scan, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruTrace {
    /// Hidden states `[T, d_h]`, the layer output.
    pub states: Tensor,
    h0: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

fn check_step_dims(x_len: usize, h_len: usize, w: &GruWeights) -> Result<()> {
    if x_len != w.input_dim() || h_len != w.hidden_dim() {
        return Err(VgsError::Dimension {
            op: "gru_cell",
            left: vec![x_len, h_len],
            right: vec![w.input_dim(), w.hidden_dim()],
        });
    }
    Ok(())
}

/// Gate values for one step; writes `z`, `r`, `cand` and returns `h`.
fn step(
    x: &[f64],
    h_prev: &[f64],
    w: &GruWeights,
    z: &mut [f64],
    r: &mut [f64],
    cand: &mut [f64],
    h: &mut [f64],
) {
    let d_h = h_prev.len();
    z.copy_from_slice(w.b_z.data());
    vec_mat_acc(x, w.w_z.data(), z);
    vec_mat_acc(h_prev, w.u_z.data(), z);
    r.copy_from_slice(w.b_r.data());
    vec_mat_acc(x, w.w_r.data(), r);
    vec_mat_acc(h_prev, w.u_r.data(), r);
    for i in 0..d_h {
        z[i] = sigmoid(z[i]);
        r[i] = sigmoid(r[i]);
    }
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    cand.copy_from_slice(w.b_h.data());
    vec_mat_acc(x, w.w_h.data(), cand);
    vec_mat_acc(&rh, w.u_h.data(), cand);
    for i in 0..d_h {
        cand[i] = cand[i].tanh();
        h[i] = (1.0 - z[i]) * h_prev[i] + z[i] * cand[i];
    }
}

/// One GRU update for a single time step.
pub fn gru_cell(x_t: &Tensor, h_prev: &Tensor, w: &GruWeights) -> Result<Tensor> {
    w.validate()?;
    check_step_dims(x_t.len(), h_prev.len(), w)?;
    let d_h = w.hidden_dim();
    let (mut z, mut r, mut cand, mut h) = (
        vec![0.0; d_h],
        vec![0.0; d_h],
        vec![0.0; d_h],
        vec![0.0; d_h],
    );
    step(
        x_t.data(),
        h_prev.data(),
        w,
        &mut z,
        &mut r,
        &mut cand,
        &mut h,
    );
    Ok(Tensor::vector(h))
}

/// Left-to-right scan over `x[T, d_in]`; `h0` defaults to zeros.
pub fn gru_layer(x: &Tensor, w: &GruWeights, h0: Option<&Tensor>) -> Result<Tensor> {
    Ok(gru_forward(x, w, h0)?.states)
}

pub fn gru_forward(x: &Tensor, w: &GruWeights, h0: Option<&Tensor>) -> Result<GruTrace> {
    w.validate()?;
    let d_h = w.hidden_dim();
    let h0 = match h0 {
        Some(h) => h.data().to_vec(),
        None => vec![0.0; d_h],
    };
    if x.rank() != 2 {
        return Err(VgsError::Dimension {
            op: "gru_layer",
            left: x.shape().to_vec(),
            right: vec![w.input_dim()],
        });
    }
    check_step_dims(x.cols(), h0.len(), w)?;
    let t_len = x.rows();
    let mut states = Tensor::zeros(&[t_len, d_h]);
    let mut z = vec![0.0; t_len * d_h];
    let mut r = vec![0.0; t_len * d_h];
    let mut cand = vec![0.0; t_len * d_h];
    let mut h_prev = h0.clone();
    for t in 0..t_len {
        let span = t * d_h..(t + 1) * d_h;
        let h = states.row_mut(t);
        step(
            x.row(t),
            &h_prev,
            w,
            &mut z[span.clone()],
            &mut r[span.clone()],
            &mut cand[span],
            h,
        );
        h_prev.copy_from_slice(h);
    }
    Ok(GruTrace {
        states,
        h0,
        z,
        r,
        cand,
    })
}

/// Back-propagation through time.
///
/// `d_states[T, d_h]` is the gradient w.r.t. every output state. Returns
/// the gradient w.r.t. `x` and accumulates weight gradients into `grads`.
pub fn gru_backward(
    x: &Tensor,
    trace: &GruTrace,
    w: &GruWeights,
    d_states: &Tensor,
    grads: &mut GruGrads,
) -> Tensor {
    let d_h = w.hidden_dim();
    let t_len = x.rows();
    let mut dx = x.zeros_like();
    let mut dh_next = vec![0.0; d_h];
    let mut dpre_z = vec![0.0; d_h];
    let mut dpre_r = vec![0.0; d_h];
    let mut dpre_h = vec![0.0; d_h];
    let mut d_rh = vec![0.0; d_h];
    let mut rh = vec![0.0; d_h];
    let [gw_z, gu_z, gb_z, gw_r, gu_r, gb_r, gw_h, gu_h, gb_h] = &mut grads.tensors;

    for t in (0..t_len).rev() {
        let span = t * d_h..(t + 1) * d_h;
        let z = &trace.z[span.clone()];
        let r = &trace.r[span.clone()];
        let cand = &trace.cand[span];
        let h_prev: &[f64] = if t == 0 {
            &trace.h0
        } else {
            trace.states.row(t - 1)
        };
        let xt = x.row(t);

        let mut dh: Vec<f64> = d_states.row(t).to_vec();
        for (a, b) in dh.iter_mut().zip(&dh_next) {
            *a += b;
        }
        let mut dh_prev: Vec<f64> = (0..d_h).map(|i| dh[i] * (1.0 - z[i])).collect();

        for i in 0..d_h {
            let dcand = dh[i] * z[i];
            dpre_h[i] = dcand * (1.0 - cand[i] * cand[i]);
            let dz = dh[i] * (cand[i] - h_prev[i]);
            dpre_z[i] = dz * z[i] * (1.0 - z[i]);
            rh[i] = r[i] * h_prev[i];
        }
        outer_acc(xt, &dpre_h, gw_h.data_mut());
        outer_acc(&rh, &dpre_h, gu_h.data_mut());
        add_into(gb_h.data_mut(), &dpre_h);
        d_rh.fill(0.0);
        mat_vec_acc(w.u_h.data(), &dpre_h, &mut d_rh);
        for i in 0..d_h {
            dh_prev[i] += d_rh[i] * r[i];
            let dr = d_rh[i] * h_prev[i];
            dpre_r[i] = dr * r[i] * (1.0 - r[i]);
        }

        outer_acc(xt, &dpre_z, gw_z.data_mut());
        outer_acc(h_prev, &dpre_z, gu_z.data_mut());
        add_into(gb_z.data_mut(), &dpre_z);
        outer_acc(xt, &dpre_r, gw_r.data_mut());
        outer_acc(h_prev, &dpre_r, gu_r.data_mut());
        add_into(gb_r.data_mut(), &dpre_r);

        mat_vec_acc(w.u_z.data(), &dpre_z, &mut dh_prev);
        mat_vec_acc(w.u_r.data(), &dpre_r, &mut dh_prev);

        let dxt = dx.row_mut(t);
        mat_vec_acc(w.w_z.data(), &dpre_z, dxt);
        mat_vec_acc(w.w_r.data(), &dpre_r, dxt);
        mat_vec_acc(w.w_h.data(), &dpre_h, dxt);

        dh.clear();
        dh_next = dh_prev;
    }
    dx
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
