use std::collections::HashMap;

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Result, VgsError};

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = value.zeros_like();
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered collection of uniquely named parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its slot.
    pub fn push(&mut self, param: Parameter) -> Result<usize> {
        if self.index.contains_key(&param.name) {
            return Err(VgsError::config(param.name, "duplicate parameter name"));
        }
        let slot = self.params.len();
        self.index.insert(param.name.clone(), slot);
        self.params.push(param);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.slot(name).map(|i| &self.params[i])
    }

    pub fn value(&self, slot: usize) -> &Tensor {
        &self.params[slot].value
    }

    pub fn param(&self, slot: usize) -> &Parameter {
        &self.params[slot]
    }

    pub fn param_mut(&mut self, slot: usize) -> &mut Parameter {
        &mut self.params[slot]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.fill(0.0));
    }

    /// Fresh zeroed gradient buffers, one per parameter, in slot order.
    pub fn grad_buffers(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.zeros_like()).collect()
    }

    /// Adds per-thread gradient buffers into the parameters' `grad`, in the
    /// order given. Summation order is fixed, so the result does not depend
    /// on how the buffers were produced.
    pub fn accumulate<'a>(&mut self, buffers: impl IntoIterator<Item = &'a [Tensor]>) {
        for buf in buffers {
            debug_assert_eq!(buf.len(), self.params.len());
            for (p, g) in self.params.iter_mut().zip(buf) {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Scaled-uniform init: `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
///
/// For rank-3 convolution kernels `[width, d_in, d_out]` the fan-in is
/// `width · d_in`.
pub fn scaled_uniform(shape: &[usize], rng: &mut Rng) -> Tensor {
    let fan_out = *shape.last().expect("non-empty shape");
    let fan_in: usize = shape[..shape.len() - 1].iter().product();
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-a, a)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape is consistent")
}
