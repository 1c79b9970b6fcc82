use crate::error::Result;
use crate::nn::{Initializer, ParamId, ParamStore};
use crate::ops;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use crate::attention::AttentionProbe;

/// A tape with every parameter of a store bound to a leaf.
pub struct ForwardCtx {
    pub tape: Tape,
    vars: Vec<Var>,
    /// Attention-weight capture; `None` disables the hook.
    pub probe: Option<AttentionProbe>,
    /// `(stage, block)` currently executing, 1-based; set by the backbone.
    pub location: Option<(usize, usize)>,
}

impl ForwardCtx {
    /// Binds parameters as differentiable named leaves.
    pub fn training(store: &ParamStore) -> Self {
        Self::with_tape(store, Tape::new(), true)
    }

    /// Binds parameters as constants; nothing on the tape requires a gradient.
    pub fn inference(store: &ParamStore) -> Self {
        Self::with_tape(store, Tape::new(), false)
    }

    pub fn with_tape(store: &ParamStore, mut tape: Tape, trainable: bool) -> Self {
        let vars = store
            .iter()
            .map(|(name, t)| if trainable { tape.param(name, t.clone()) } else { tape.constant(t.clone()) })
            .collect();
        Self {
            tape,
            vars,
            probe: None,
            location: None,
        }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Truncated-normal (std 0.02) weight, zero bias.
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, in_dim: usize, out_dim: usize) -> Result<Self> {
        let weight = store.insert(format!("{name}.weight"), init.trunc_normal(&[in_dim, out_dim], 0.02))?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let (w, b) = (ctx.var(self.weight), ctx.var(self.bias));
        ctx.tape.linear(x, w, Some(b))
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn macs(&self, tokens: usize) -> u64 {
        (tokens * self.in_dim * self.out_dim) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Dense,
    Depthwise,
}

#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// Square-kernel convolution with fan-out-scaled normal weights and zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        name: &str,
        kind: ConvKind,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (shape, groups) = match kind {
            ConvKind::Dense => ([out_channels, in_channels, kernel, kernel], 1),
            ConvKind::Depthwise => ([out_channels, 1, kernel, kernel], out_channels),
        };
        let weight = store.insert(format!("{name}.weight"), init.conv_fan_out(&shape, groups))?;
        let bias = store.insert(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            weight,
            bias,
            kind,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        })
    }

    pub fn depthwise(store: &mut ParamStore, init: &mut Initializer, name: &str, channels: usize, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        Self::new(store, init, name, ConvKind::Depthwise, channels, channels, kernel, stride, padding)
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let (w, b) = (ctx.var(self.weight), ctx.var(self.bias));
        match self.kind {
            ConvKind::Dense => ctx.tape.conv2d(x, w, Some(b), self.stride, self.padding),
            ConvKind::Depthwise => ctx.tape.dwconv2d(x, w, Some(b), self.stride, self.padding),
        }
    }

    pub fn output_side(&self, side: usize) -> Option<usize> {
        ops::conv_out_len(side, self.kernel, self.stride, self.padding)
    }

    pub fn param_count(&self) -> usize {
        let per_out = match self.kind {
            ConvKind::Dense => self.in_channels,
            ConvKind::Depthwise => 1,
        };
        self.out_channels * per_out * self.kernel * self.kernel + self.out_channels
    }

    /// `O·C·k²·Ho·Wo`, divided by `C` for depth-wise.
    pub fn macs(&self, out_h: usize, out_w: usize) -> u64 {
        let per_out = match self.kind {
            ConvKind::Dense => self.in_channels,
            ConvKind::Depthwise => 1,
        };
        (self.out_channels * per_out * self.kernel * self.kernel * out_h * out_w) as u64
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Result<Self> {
        let gamma = store.insert(format!("{name}.gamma"), Tensor::ones(&[dim]))?;
        let beta = store.insert(format!("{name}.beta"), Tensor::zeros(&[dim]))?;
        Ok(Self { gamma, beta, dim })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let (g, b) = (ctx.var(self.gamma), ctx.var(self.beta));
        ctx.tape.layernorm(x, g, b)
    }

    pub fn param_count(&self) -> usize {
        2 * self.dim
    }
}

/// `[B, C, H, W]` map to `[B, H·W, C]` tokens.
pub fn map_to_tokens(ctx: &mut ForwardCtx, map: Var) -> Result<Var> {
    let s = ctx.tape.shape(map).to_vec();
    let flat = ctx.tape.reshape(map, &[s[0], s[1], s[2] * s[3]])?;
    ctx.tape.permute(flat, &[0, 2, 1])
}

/// `[B, H·W, C]` tokens to a `[B, C, H, W]` map.
pub fn tokens_to_map(ctx: &mut ForwardCtx, tokens: Var, grid: (usize, usize)) -> Result<Var> {
    let s = ctx.tape.shape(tokens).to_vec();
    let t = ctx.tape.permute(tokens, &[0, 2, 1])?;
    ctx.tape.reshape(t, &[s[0], s[2], grid.0, grid.1])
}
