//! Dense numerical primitives with hand-derived backward passes.

pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod params;
pub mod rng;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use gru::{gru_backward, gru_cell, gru_forward, gru_layer, GruGrads, GruTrace, GruWeights};
pub use ops::{
    affine, affine_backward, conv1d, conv1d_backward, conv1d_output_len, l2_normalize,
    l2_normalize_backward, softmax, softmax_backward,
};
pub use params::{ParamSet, Parameter};
pub use rng::Rng;
pub use tensor::{dot, Tensor};
