//! Eagle-vision pyramid backbones built from bi-fovea self-attention.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`], [`ops`], [`tape`]: an `f64` tensor with pure kernels and a
//!   reverse-mode tape over them.
//! * [`nn`]: named parameter storage, initialization, and the primitive
//!   layers (linear, convolution, layer norm).
//! * [`attention`] and [`feedforward`]: the shallow/deep fovea attentions,
//!   their three connection patterns, and the FFN/CFFN/BFFN variants.
//! * [`backbone`]: BEV blocks, the four-stage pyramid, variant tables, and
//!   the checkpoint format.
//! * [`analysis`]: parameter and MAC accounting, reference reconciliation,
//!   and attention-map export.
//! * [`harness`]: run configuration, toy datasets, training, and gradient
//!   checking.

pub mod analysis;
pub mod attention;
pub mod backbone;
pub mod error;
pub mod feedforward;
pub mod harness;
pub mod image;
pub mod nn;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
