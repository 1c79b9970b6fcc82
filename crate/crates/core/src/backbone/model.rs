use crate::attention::{Bfsa, ConnectionPattern};
use crate::backbone::config::{BlockOptions, StageConfig, VariantSpec};
use crate::error::{Error, Result};
use crate::feedforward::{FeedForward, FfnConfig};
use crate::nn::{map_to_tokens, tokens_to_map, Conv, ConvKind, ForwardCtx, Initializer, LayerNorm, Linear, ParamStore};
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    pub seed: u64,
    pub block: BlockOptions,
    /// Start the classifier at zero so every class is equally likely.
    pub zero_head: bool,
}

impl BuildOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

/// `X = CPE(x) + x; Y = BFSA(LN(X)) + X; Z = FFN(LN(Y)) + Y`.
#[derive(Debug, Clone)]
pub struct BevBlock {
    pub cpe: Conv,
    pub norm1: LayerNorm,
    pub attn: Bfsa,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub pattern: ConnectionPattern,
}

impl BevBlock {
    pub fn new(store: &mut ParamStore, init: &mut Initializer, name: &str, stage: &StageConfig, options: BlockOptions) -> Result<Self> {
        let c = stage.channels;
        let cpe = Conv::depthwise(store, init, &format!("{name}.cpe"), c, 3, 1, 1)?;
        let norm1 = LayerNorm::new(store, &format!("{name}.norm1"), c)?;
        let attn = Bfsa::new(store, init, &format!("{name}.bfsa"), stage.attention())?;
        let norm2 = LayerNorm::new(store, &format!("{name}.norm2"), c)?;
        let ffn = FeedForward::new(
            store,
            init,
            &format!("{name}.ffn"),
            FfnConfig {
                dim: c,
                expansion: stage.expansion,
                kind: options.ffn,
            },
        )?;
        Ok(Self {
            cpe,
            norm1,
            attn,
            norm2,
            ffn,
            pattern: options.pattern,
        })
    }

    /// `map`: `[B, C, H, W]`; returns the same shape.
    pub fn forward(&self, ctx: &mut ForwardCtx, map: Var) -> Result<Var> {
        let s = ctx.tape.shape(map).to_vec();
        let grid = (s[2], s[3]);
        let pos = self.cpe.forward(ctx, map)?;
        let x = ctx.tape.add(pos, map)?;
        let x = map_to_tokens(ctx, x)?;
        let normed = self.norm1.forward(ctx, x)?;
        let attended = self.attn.forward(ctx, normed, grid, self.pattern)?;
        let y = ctx.tape.add(attended, x)?;
        let normed = self.norm2.forward(ctx, y)?;
        let fed = self.ffn.forward(ctx, normed, grid)?;
        let z = ctx.tape.add(fed, y)?;
        tokens_to_map(ctx, z, grid)
    }

    pub fn param_count(&self) -> usize {
        self.cpe.param_count() + self.norm1.param_count() + self.attn.param_count() + self.norm2.param_count() + self.ffn.param_count()
    }
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub config: StageConfig,
    /// 2×2 stride-2 patch embedding.
    pub embed: Conv,
    pub blocks: Vec<BevBlock>,
}

/// Three 3×3 convolutions, the first with stride 2, GELU between them.
#[derive(Debug, Clone)]
pub struct Stem {
    pub convs: [Conv; 3],
}

/// 1×1 projection, GELU, global average pool, fully connected classifier.
#[derive(Debug, Clone)]
pub struct Head {
    pub proj: Conv,
    pub fc: Linear,
}

/// Output of a backbone forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[N, num_classes]`.
    pub logits: Var,
    /// Per-stage `[N, C_i, H/2^(i+2), W/2^(i+2)]` maps.
    pub stages: Vec<Var>,
}

/// A built backbone: architecture plus its named parameters.
#[derive(Debug, Clone)]
pub struct Evit {
    pub spec: VariantSpec,
    pub options: BuildOptions,
    params: ParamStore,
    pub stem: Stem,
    pub stages: Vec<Stage>,
    pub head: Head,
}

impl Evit {
    /// Builds and initializes a backbone. Identical `spec` and `options`
    /// always yield bitwise-identical parameters.
    pub fn build(spec: &VariantSpec, options: BuildOptions) -> Result<Self> {
        spec.validate()?;
        let mut store = ParamStore::new();
        let mut init = Initializer::new(options.seed);
        let s = spec.stem_channels;
        let stem = Stem {
            convs: [
                Conv::new(&mut store, &mut init, "stem.conv1", ConvKind::Dense, 3, s, 3, 2, 1)?,
                Conv::new(&mut store, &mut init, "stem.conv2", ConvKind::Dense, s, s, 3, 1, 1)?,
                Conv::new(&mut store, &mut init, "stem.conv3", ConvKind::Dense, s, s, 3, 1, 1)?,
            ],
        };
        let mut stages = Vec::with_capacity(4);
        let mut in_channels = s;
        for (i, cfg) in spec.stages.iter().enumerate() {
            let prefix = format!("stage{}", i + 1);
            let embed = Conv::new(&mut store, &mut init, &format!("{prefix}.embed"), ConvKind::Dense, in_channels, cfg.channels, 2, 2, 0)?;
            let blocks = (0..cfg.blocks)
                .map(|b| BevBlock::new(&mut store, &mut init, &format!("{prefix}.block{}", b + 1), cfg, options.block))
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage {
                config: *cfg,
                embed,
                blocks,
            });
            in_channels = cfg.channels;
        }
        let head = Head {
            proj: Conv::new(&mut store, &mut init, "head.proj", ConvKind::Dense, in_channels, spec.head_channels, 1, 1, 0)?,
            fc: Linear::new(&mut store, &mut init, "head.fc", spec.head_channels, spec.num_classes)?,
        };
        if options.zero_head {
            store.set(head.fc.weight, Tensor::zeros(&[spec.head_channels, spec.num_classes]))?;
        }
        Ok(Self {
            spec: spec.clone(),
            options,
            params: store,
            stem,
            stages,
            head,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Every parameter leaf exactly once, in build order.
    pub fn trainable_parameters(&self) -> Vec<(&str, &Tensor)> {
        self.params.iter().collect()
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn check_images(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::shape("forward", format!("expected N×3×H×W images, got {shape:?}")));
        }
        self.spec.validate_input((shape[2], shape[3]))
    }

    /// Runs the whole network on `images: [N, 3, H, W]`.
    pub fn forward(&self, ctx: &mut ForwardCtx, images: Var) -> Result<ForwardOutput> {
        self.check_images(ctx.tape.shape(images))?;
        let [c1, c2, c3] = &self.stem.convs;
        let mut x = c1.forward(ctx, images)?;
        x = ctx.tape.gelu(x);
        x = c2.forward(ctx, x)?;
        x = ctx.tape.gelu(x);
        x = c3.forward(ctx, x)?;

        let mut stage_maps = Vec::with_capacity(self.stages.len());
        for (si, stage) in self.stages.iter().enumerate() {
            x = stage.embed.forward(ctx, x)?;
            for (bi, block) in stage.blocks.iter().enumerate() {
                ctx.location = Some((si + 1, bi + 1));
                x = block.forward(ctx, x)?;
            }
            ctx.location = None;
            stage_maps.push(x);
        }

        let h = self.head.proj.forward(ctx, x)?;
        let h = ctx.tape.gelu(h);
        let pooled = ctx.tape.avgpool_global(h)?;
        let logits = self.head.fc.forward(ctx, pooled)?;
        Ok(ForwardOutput { logits, stages: stage_maps })
    }

    /// Inference-only logits and stage maps.
    pub fn predict_with_stages(&self, images: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut ctx = ForwardCtx::inference(&self.params);
        let x = ctx.tape.constant(images.clone());
        let out = self.forward(&mut ctx, x)?;
        let stages = out.stages.iter().map(|&v| ctx.tape.value(v).clone()).collect();
        Ok((ctx.tape.value(out.logits).clone(), stages))
    }

    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        Ok(self.predict_with_stages(images)?.0)
    }

    /// Zeroes the output weights of every residual branch (CPE kernel, both
    /// attention output projections, the feedforward output projection), so
    /// each block reduces to the identity map.
    pub fn zero_residual_branches(&mut self) -> Result<()> {
        let mut ids = Vec::new();
        for block in self.stages.iter().flat_map(|s| &s.blocks) {
            ids.extend([block.cpe.weight, block.cpe.bias]);
            ids.extend([block.attn.sfa.out.weight, block.attn.sfa.out.bias]);
            ids.extend([block.attn.dfa.out.weight, block.attn.dfa.out.bias]);
            ids.extend([block.ffn.fc2.weight, block.ffn.fc2.bias]);
        }
        for id in ids {
            let shape = self.params.get(id).shape().to_vec();
            self.params.set(id, Tensor::zeros(&shape))?;
        }
        Ok(())
    }
}
