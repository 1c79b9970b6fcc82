//! Token-wise feedforward variants: plain FFN, convolutional FFN, and the
//! bi-fovea FFN.
//!
//! The bi-fovea FFN carries the attention's shallow/deep wiring into the
//! hidden stage. After the expanding projection the hidden channels are
//! split in two:
//!
//! ```text
//! shallow = dw3x3(a)
//! deep    = dw3x3(dw3x3(shallow + b))
//! hidden  = gelu(concat(shallow, deep))
//! ```
//!
//! The deep branch stacks two 3×3 depth-wise kernels, so it sees a 5×5
//! neighbourhood of the shallow branch's 3×3 one. With an odd hidden width
//! the shallow half is the larger one and only its first `b` channels feed
//! the deep branch.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{map_to_tokens, tokens_to_map, Conv, ForwardCtx, Initializer, Linear, ParamStore};
use crate::tape::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FfnKind {
    Ffn,
    Cffn,
    #[default]
    Bffn,
}

impl FfnKind {
    pub const ALL: [FfnKind; 3] = [Self::Ffn, Self::Cffn, Self::Bffn];
}

impl fmt::Display for FfnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ffn => "ffn",
            Self::Cffn => "cffn",
            Self::Bffn => "bffn",
        })
    }
}

impl FromStr for FfnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ffn" => Ok(Self::Ffn),
            "cffn" => Ok(Self::Cffn),
            "bffn" => Ok(Self::Bffn),
            other => Err(Error::Config(format!("unknown feedforward kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfnConfig {
    pub dim: usize,
    pub expansion: f64,
    pub kind: FfnKind,
}

impl FfnConfig {
    pub fn hidden(&self) -> usize {
        (self.dim as f64 * self.expansion).round() as usize
    }

    /// `(shallow, deep)` channel split of the hidden stage.
    pub fn halves(&self) -> (usize, usize) {
        let h = self.hidden();
        (h.div_ceil(2), h / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.expansion.is_finite() && self.expansion > 0.0) || self.hidden() == 0 {
            return Err(Error::Config(format!("expansion {} gives no hidden channels for dim {}", self.expansion, self.dim)));
        }
        if self.kind == FfnKind::Bffn && self.hidden() < 2 {
            return Err(Error::Config("bffn needs at least two hidden channels".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum HiddenStage {
    None,
    Conv { dw: Conv },
    BiFovea { shallow: Conv, deep_in: Conv, deep_out: Conv },
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub config: FfnConfig,
    pub fc1: Linear,
    pub fc2: Linear,
    hidden: HiddenStage,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, config: FfnConfig) -> Result<Self> {
        config.validate()?;
        let hidden = config.hidden();
        let fc1 = Linear::new(store, init, &format!("{name}.fc1"), config.dim, hidden)?;
        let stage = match config.kind {
            FfnKind::Ffn => HiddenStage::None,
            FfnKind::Cffn => HiddenStage::Conv {
                dw: Conv::depthwise(store, init, &format!("{name}.dw"), hidden, 3, 1, 1)?,
            },
            FfnKind::Bffn => {
                let (a, b) = config.halves();
                HiddenStage::BiFovea {
                    shallow: Conv::depthwise(store, init, &format!("{name}.shallow_dw"), a, 3, 1, 1)?,
                    deep_in: Conv::depthwise(store, init, &format!("{name}.deep_dw1"), b, 3, 1, 1)?,
                    deep_out: Conv::depthwise(store, init, &format!("{name}.deep_dw2"), b, 3, 1, 1)?,
                }
            }
        };
        let fc2 = Linear::new(store, init, &format!("{name}.fc2"), hidden, config.dim)?;
        Ok(Self {
            config,
            fc1,
            fc2,
            hidden: stage,
        })
    }

    /// `x`: `[B, H·W, C]` tokens on a `grid = (H, W)` lattice.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var, grid: (usize, usize)) -> Result<Var> {
        let h = self.fc1.forward(ctx, x)?;
        let activated = match &self.hidden {
            HiddenStage::None => ctx.tape.gelu(h),
            HiddenStage::Conv { dw } => {
                let map = tokens_to_map(ctx, h, grid)?;
                let local = dw.forward(ctx, map)?;
                let mixed = ctx.tape.add(map, local)?;
                let tokens = map_to_tokens(ctx, mixed)?;
                ctx.tape.gelu(tokens)
            }
            HiddenStage::BiFovea { shallow, deep_in, deep_out } => {
                let (na, nb) = self.config.halves();
                let map = tokens_to_map(ctx, h, grid)?;
                let a = ctx.tape.narrow(map, 1, 0, na)?;
                let b = ctx.tape.narrow(map, 1, na, nb)?;
                let s = shallow.forward(ctx, a)?;
                let s_head = if na == nb { s } else { ctx.tape.narrow(s, 1, 0, nb)? };
                let fused = ctx.tape.add(s_head, b)?;
                let d = deep_in.forward(ctx, fused)?;
                let d = deep_out.forward(ctx, d)?;
                let merged = ctx.tape.concat(&[s, d], 1)?;
                let tokens = map_to_tokens(ctx, merged)?;
                ctx.tape.gelu(tokens)
            }
        };
        self.fc2.forward(ctx, activated)
    }

    /// Depth-wise convolutions of the hidden stage, in execution order.
    pub fn hidden_convs(&self) -> Vec<&Conv> {
        match &self.hidden {
            HiddenStage::None => vec![],
            HiddenStage::Conv { dw } => vec![dw],
            HiddenStage::BiFovea { shallow, deep_in, deep_out } => vec![shallow, deep_in, deep_out],
        }
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count() + self.hidden_convs().iter().map(|c| c.param_count()).sum::<usize>()
    }
}
