//! The four-stage pyramid: variant tables, BEV blocks, and persistence.

pub mod checkpoint;
mod config;
mod model;

pub use config::{BlockOptions, StageConfig, VariantName, VariantSpec, HEAD_CHANNELS, IMAGENET_CLASSES, INPUT_DIVISOR};
pub use model::{BevBlock, BuildOptions, Evit, ForwardOutput, Head, Stage, Stem};
