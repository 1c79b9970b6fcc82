//! Pure forward kernels and their adjoints.
//!
//! Every function here is deterministic and allocation-only: equal inputs
//! give bitwise-equal outputs. The differentiable wrappers live in
//! [`crate::tape`].

pub mod counter;
mod conv;
mod elementwise;
mod layout;
mod matmul;
mod norm;

pub use conv::{conv2d, conv2d_backward, conv_out_len, dwconv2d, dwconv2d_backward, ConvGeometry};
pub use counter::MacCounter;
pub use elementwise::{
    add, avgpool_global, avgpool_global_backward, cross_entropy, cross_entropy_backward, gelu, gelu_backward, mul,
    scale, sub,
};
pub use layout::{concat, concat_last_axis, inverse_permutation, narrow, narrow_backward, permute, transpose};
pub use matmul::{linear, linear_backward, matmul, matmul_backward};
pub use norm::{layernorm, layernorm_backward, softmax, softmax_backward, LayerNormCache, LAYERNORM_EPS};
