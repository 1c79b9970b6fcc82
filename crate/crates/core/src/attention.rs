//! Shallow and deep fovea attention and the ways of wiring them together.
//!
//! Both foveae are multi-head scaled dot-product attention whose keys and
//! values are computed from a spatially reduced copy of the input: a
//! depth-wise convolution with kernel and stride equal to the reduction
//! factor aggregates non-overlapping `r×r` patches, shrinking the key/value
//! token count by `r²`. The shallow fovea takes the stage's larger reduction
//! (coarse, global context); the deep fovea takes the smaller one.
//!
//! The bi-fovea composition feeds the shallow output into the deep fovea and
//! sums both: `out = sfa(x) + dfa(sfa(x))`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{map_to_tokens, tokens_to_map, Conv, ForwardCtx, Initializer, Linear, ParamStore};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub dim: usize,
    pub heads: usize,
    pub sfa_reduction: usize,
    pub dfa_reduction: usize,
}

impl AttentionConfig {
    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dim {} is not divisible by {} heads", self.dim, self.heads)));
        }
        if self.sfa_reduction == 0 || self.dfa_reduction == 0 {
            return Err(Error::Config("reduction factors must be positive".into()));
        }
        Ok(())
    }

    /// Checks that both reductions tile a `h×w` token grid.
    pub fn validate_grid(&self, grid: (usize, usize)) -> Result<()> {
        for (name, r) in [("sfa", self.sfa_reduction), ("dfa", self.dfa_reduction)] {
            if !grid.0.is_multiple_of(r) || !grid.1.is_multiple_of(r) {
                return Err(Error::Config(format!(
                    "{name} reduction {r} does not divide the {}×{} token grid",
                    grid.0, grid.1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ConnectionPattern {
    Parallel,
    Cascade,
    #[default]
    BiFovea,
}

impl ConnectionPattern {
    pub const ALL: [ConnectionPattern; 3] = [Self::Parallel, Self::Cascade, Self::BiFovea];
}

impl fmt::Display for ConnectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Parallel => "parallel",
            Self::Cascade => "cascade",
            Self::BiFovea => "bifovea",
        })
    }
}

impl FromStr for ConnectionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "parallel" => Ok(Self::Parallel),
            "cascade" => Ok(Self::Cascade),
            "bifovea" => Ok(Self::BiFovea),
            other => Err(Error::Config(format!("unknown connection pattern {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fovea {
    Shallow,
    Deep,
}

impl fmt::Display for Fovea {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shallow => "sfa",
            Self::Deep => "dfa",
        })
    }
}

/// Softmax weights captured from one attention call.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub location: Option<(usize, usize)>,
    pub fovea: Fovea,
    /// `[batch, heads, queries, keys]`.
    pub weights: Tensor,
    pub query_grid: (usize, usize),
    pub key_grid: (usize, usize),
}

/// Inspection hook collecting attention weights during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionProbe {
    /// Only record at this `(stage, block)`; `None` records everything.
    pub filter: Option<(usize, usize)>,
    pub records: Vec<AttentionRecord>,
}

impl AttentionProbe {
    pub fn at(stage: usize, block: usize) -> Self {
        Self {
            filter: Some((stage, block)),
            records: Vec::new(),
        }
    }

    pub fn everything() -> Self {
        Self::default()
    }
}

/// One fovea: multi-head attention over reduced keys/values.
#[derive(Debug, Clone)]
pub struct FoveaAttention {
    pub fovea: Fovea,
    pub dim: usize,
    pub heads: usize,
    pub reduction: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    /// Present iff `reduction > 1`.
    pub reduce: Option<Conv>,
}

impl FoveaAttention {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, fovea: Fovea, dim: usize, heads: usize, reduction: usize) -> Result<Self> {
        let q = Linear::new(store, init, &format!("{name}.q"), dim, dim)?;
        let reduce = if reduction > 1 {
            Some(Conv::depthwise(store, init, &format!("{name}.reduce"), dim, reduction, reduction, 0)?)
        } else {
            None
        };
        let k = Linear::new(store, init, &format!("{name}.k"), dim, dim)?;
        let v = Linear::new(store, init, &format!("{name}.v"), dim, dim)?;
        let out = Linear::new(store, init, &format!("{name}.out"), dim, dim)?;
        Ok(Self {
            fovea,
            dim,
            heads,
            reduction,
            q,
            k,
            v,
            out,
            reduce,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn key_grid(&self, grid: (usize, usize)) -> (usize, usize) {
        (grid.0 / self.reduction, grid.1 / self.reduction)
    }

    /// `x`: `[B, H·W, C]` tokens on a `grid = (H, W)` lattice.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var, grid: (usize, usize)) -> Result<Var> {
        let shape = ctx.tape.shape(x).to_vec();
        let (b, n, c) = (shape[0], shape[1], shape[2]);
        if c != self.dim || n != grid.0 * grid.1 {
            return Err(Error::shape("attention", format!("tokens {shape:?} do not fit grid {grid:?} with dim {}", self.dim)));
        }
        if !grid.0.is_multiple_of(self.reduction) || !grid.1.is_multiple_of(self.reduction) {
            return Err(Error::Config(format!(
                "{} reduction {} does not divide the {}×{} token grid",
                self.fovea, self.reduction, grid.0, grid.1
            )));
        }
        let (h, d) = (self.heads, self.head_dim());
        let key_grid = self.key_grid(grid);
        let nk = key_grid.0 * key_grid.1;

        let q = self.q.forward(ctx, x)?;
        let q = ctx.tape.reshape(q, &[b, n, h, d])?;
        let q = ctx.tape.permute(q, &[0, 2, 1, 3])?;

        let source = match &self.reduce {
            Some(conv) => {
                let map = tokens_to_map(ctx, x, grid)?;
                let reduced = conv.forward(ctx, map)?;
                map_to_tokens(ctx, reduced)?
            }
            None => x,
        };
        let k = self.k.forward(ctx, source)?;
        let k = ctx.tape.reshape(k, &[b, nk, h, d])?;
        let k_t = ctx.tape.permute(k, &[0, 2, 3, 1])?;
        let v = self.v.forward(ctx, source)?;
        let v = ctx.tape.reshape(v, &[b, nk, h, d])?;
        let v = ctx.tape.permute(v, &[0, 2, 1, 3])?;

        let scores = ctx.tape.matmul(q, k_t)?;
        let scores = ctx.tape.scale(scores, 1.0 / (d as f64).sqrt());
        let weights = ctx.tape.softmax(scores);
        if let Some(probe) = ctx.probe.as_mut() {
            if probe.filter.is_none() || probe.filter == ctx.location {
                probe.records.push(AttentionRecord {
                    location: ctx.location,
                    fovea: self.fovea,
                    weights: ctx.tape.value(weights).clone(),
                    query_grid: grid,
                    key_grid,
                });
            }
        }
        let heads = ctx.tape.matmul(weights, v)?;
        let heads = ctx.tape.permute(heads, &[0, 2, 1, 3])?;
        let merged = ctx.tape.reshape(heads, &[b, n, c])?;
        self.out.forward(ctx, merged)
    }

    pub fn param_count(&self) -> usize {
        self.q.param_count()
            + self.k.param_count()
            + self.v.param_count()
            + self.out.param_count()
            + self.reduce.as_ref().map_or(0, Conv::param_count)
    }
}

/// The shallow/deep fovea pair of one block.
///
/// All three connection patterns use the same parameter leaves; only the
/// wiring changes.
#[derive(Debug, Clone)]
pub struct Bfsa {
    pub config: AttentionConfig,
    pub sfa: FoveaAttention,
    pub dfa: FoveaAttention,
}

impl Bfsa {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, config: AttentionConfig) -> Result<Self> {
        config.validate()?;
        let sfa = FoveaAttention::new(store, init, &format!("{name}.sfa"), Fovea::Shallow, config.dim, config.heads, config.sfa_reduction)?;
        let dfa = FoveaAttention::new(store, init, &format!("{name}.dfa"), Fovea::Deep, config.dim, config.heads, config.dfa_reduction)?;
        Ok(Self { config, sfa, dfa })
    }

    pub fn forward_sfa(&self, ctx: &mut ForwardCtx, x: Var, grid: (usize, usize)) -> Result<Var> {
        self.sfa.forward(ctx, x, grid)
    }

    pub fn forward_dfa(&self, ctx: &mut ForwardCtx, x: Var, grid: (usize, usize)) -> Result<Var> {
        self.dfa.forward(ctx, x, grid)
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var, grid: (usize, usize), pattern: ConnectionPattern) -> Result<Var> {
        self.config.validate_grid(grid)?;
        let shallow = self.sfa.forward(ctx, x, grid)?;
        match pattern {
            ConnectionPattern::BiFovea => {
                let deep = self.dfa.forward(ctx, shallow, grid)?;
                ctx.tape.add(shallow, deep)
            }
            ConnectionPattern::Parallel => {
                let deep = self.dfa.forward(ctx, x, grid)?;
                ctx.tape.add(shallow, deep)
            }
            ConnectionPattern::Cascade => self.dfa.forward(ctx, shallow, grid),
        }
    }

    pub fn param_count(&self) -> usize {
        self.sfa.param_count() + self.dfa.param_count()
    }
}
