//! Adam with bias correction and optional global-norm clipping.

use crate::error::{Result, VgsError};
use crate::numcore::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
}

/// First and second moments per parameter plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        AdamState {
            step: 0,
            m: params.grad_buffers(),
            v: params.grad_buffers(),
        }
    }
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

/// One update of `params` from `grads`. Returns the pre-clipping gradient norm.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &mut [Tensor],
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<f64> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(VgsError::Dimension {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.m.len(), state.v.len()],
        });
    }
    for (slot, g) in grads.iter().enumerate() {
        let p = params.value(slot);
        p.same_shape(g, "adam_step")?;
        p.same_shape(&state.m[slot], "adam_step")?;
        p.same_shape(&state.v[slot], "adam_step")?;
    }
    let norm = match config.clip_norm {
        Some(c) => clip_global_norm(grads, c),
        None => global_norm(grads),
    };
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (slot, g) in grads.iter().enumerate() {
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let p = params.param_mut(slot).value.data_mut();
        for k in 0..g.len() {
            let gk = g.data()[k];
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Parameter;

    fn config(lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }

    fn scalar_set(x: f64) -> ParamSet {
        let mut s = ParamSet::new();
        s.push(Parameter::new("x", Tensor::vector(vec![x])))
            .unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut set = scalar_set(0.7);
        let mut st = AdamState::new(&set);
        for _ in 0..3 {
            adam_step(
                &mut set,
                &mut [Tensor::vector(vec![0.0])],
                &mut st,
                &config(0.1),
            )
            .unwrap();
        }
        assert_eq!(set.value(0).data(), &[0.7]);
        assert_eq!(st.step, 3);
    }

    #[test]
    fn first_step_scalar() {
        // m̂ = g, v̂ = g², so the update is lr·g/(|g| + eps).
        for g in [0.3, -2.0, 1e-6] {
            let mut set = scalar_set(1.0);
            let mut st = AdamState::new(&set);
            adam_step(
                &mut set,
                &mut [Tensor::vector(vec![g])],
                &mut st,
                &config(0.01),
            )
            .unwrap();
            let want = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((set.value(0).data()[0] - want).abs() < 1e-15, "{g}");
        }
    }

    #[test]
    fn second_step_scalar() {
        // Hand-computed: g1 = 1, g2 = -1.
        let mut set = scalar_set(0.0);
        let mut st = AdamState::new(&set);
        let c = config(0.1);
        adam_step(&mut set, &mut [Tensor::vector(vec![1.0])], &mut st, &c).unwrap();
        adam_step(&mut set, &mut [Tensor::vector(vec![-1.0])], &mut st, &c).unwrap();
        let m: f64 = 0.9 * 0.1 - 0.1;
        let v: f64 = 0.999 * 0.001 + 0.001;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let want = -0.1 * 1.0 / (1.0 + 1e-8) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((set.value(0).data()[0] - want).abs() < 1e-14);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        assert_eq!(clip_global_norm(&mut g, 2.0), 5.0);
        assert!((global_norm(&g) - 2.0).abs() < 1e-15);
        let mut small = vec![Tensor::vector(vec![0.3])];
        clip_global_norm(&mut small, 2.0);
        assert_eq!(small[0].data(), &[0.3]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut set = scalar_set(1.0);
        let mut st = AdamState::new(&set);
        let err = adam_step(
            &mut set,
            &mut [Tensor::vector(vec![1.0, 2.0])],
            &mut st,
            &config(0.1),
        );
        assert!(err.is_err());
    }
}
