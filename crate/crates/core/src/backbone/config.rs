use std::fmt;
use std::str::FromStr;

use crate::attention::{AttentionConfig, ConnectionPattern};
use crate::error::{Error, Result};
use crate::feedforward::FfnKind;

pub const HEAD_CHANNELS: usize = 1280;
pub const IMAGENET_CLASSES: usize = 1000;
/// Total downsampling from input to the last stage.
pub const INPUT_DIVISOR: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantName {
    Tiny,
    Small,
    Base,
    Large,
}

impl VariantName {
    pub const ALL: [VariantName; 4] = [Self::Tiny, Self::Small, Self::Base, Self::Large];

    pub fn spec(self) -> VariantSpec {
        VariantSpec::named(self)
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tiny => "tiny",
            Self::Small => "small",
            Self::Base => "base",
            Self::Large => "large",
        })
    }
}

impl FromStr for VariantName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Self::Tiny),
            "small" => Ok(Self::Small),
            "base" => Ok(Self::Base),
            "large" => Ok(Self::Large),
            other => Err(Error::Config(format!("unknown variant {other}"))),
        }
    }
}

/// Hyperparameters of one pyramid stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub blocks: usize,
    pub channels: usize,
    pub heads: usize,
    pub sfa_reduction: usize,
    pub dfa_reduction: usize,
    pub expansion: f64,
}

impl StageConfig {
    pub const fn new(blocks: usize, channels: usize, heads: usize, sfa_reduction: usize, dfa_reduction: usize, expansion: f64) -> Self {
        Self {
            blocks,
            channels,
            heads,
            sfa_reduction,
            dfa_reduction,
            expansion,
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            dim: self.channels,
            heads: self.heads,
            sfa_reduction: self.sfa_reduction,
            dfa_reduction: self.dfa_reduction,
        }
    }
}

/// Full architecture description of one backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    /// `tiny`/`small`/`base`/`large` for the reference variants; free text otherwise.
    pub name: String,
    pub stem_channels: usize,
    pub stages: [StageConfig; 4],
    pub head_channels: usize,
    pub num_classes: usize,
}

impl VariantSpec {
    pub fn named(name: VariantName) -> Self {
        let s = StageConfig::new;
        let (stem_channels, stages) = match name {
            VariantName::Tiny => (28, [s(2, 56, 1, 8, 4, 3.0), s(2, 112, 2, 4, 2, 3.0), s(6, 224, 4, 2, 1, 3.0), s(2, 448, 8, 1, 1, 3.0)]),
            VariantName::Small => (32, [s(3, 64, 1, 8, 4, 3.0), s(3, 128, 2, 4, 2, 3.0), s(12, 256, 4, 2, 1, 3.0), s(3, 512, 8, 1, 1, 3.0)]),
            VariantName::Base => (32, [s(4, 64, 2, 8, 4, 3.5), s(4, 128, 4, 4, 2, 3.5), s(27, 256, 8, 2, 1, 3.5), s(4, 512, 16, 1, 1, 3.5)]),
            VariantName::Large => (36, [s(4, 72, 2, 8, 4, 4.0), s(4, 144, 4, 4, 2, 4.0), s(27, 288, 8, 2, 1, 4.0), s(4, 576, 16, 1, 1, 4.0)]),
        };
        Self {
            name: name.to_string(),
            stem_channels,
            stages,
            head_channels: HEAD_CHANNELS,
            num_classes: IMAGENET_CLASSES,
        }
    }

    pub fn tiny() -> Self {
        Self::named(VariantName::Tiny)
    }

    pub fn small() -> Self {
        Self::named(VariantName::Small)
    }

    pub fn base() -> Self {
        Self::named(VariantName::Base)
    }

    pub fn large() -> Self {
        Self::named(VariantName::Large)
    }

    pub fn variant(&self) -> Option<VariantName> {
        self.name.parse().ok().filter(|v: &VariantName| v.spec().stages == self.stages)
    }

    /// Narrower, shallower copy for fast verification runs: every width is
    /// divided by `width_divisor` and each stage keeps `blocks` blocks.
    pub fn reduced(&self, width_divisor: usize, blocks: usize) -> Self {
        let mut out = self.clone();
        out.name = format!("{}-reduced", self.name);
        out.stem_channels = (self.stem_channels / width_divisor).max(1);
        for st in &mut out.stages {
            st.channels = (st.channels / width_divisor).max(st.heads);
            st.blocks = blocks;
        }
        out
    }

    /// The reduced Tiny used by gradient checks and toy training: quarter
    /// width, one block per stage.
    pub fn reduced_tiny(num_classes: usize) -> Self {
        let mut spec = Self::tiny().reduced(4, 1);
        spec.num_classes = num_classes;
        spec
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("{}: {msg}", self.name)));
        if self.stem_channels == 0 || self.head_channels == 0 || self.num_classes == 0 {
            return fail("stem, head, and class counts must be positive".into());
        }
        for (i, st) in self.stages.iter().enumerate() {
            let idx = i + 1;
            if st.blocks == 0 {
                return fail(format!("stage {idx} has no blocks"));
            }
            if st.heads == 0 || st.channels % st.heads != 0 {
                return fail(format!("stage {idx} channels {} not divisible by {} heads", st.channels, st.heads));
            }
            if st.sfa_reduction == 0 || st.dfa_reduction == 0 {
                return fail(format!("stage {idx} reductions must be positive"));
            }
            if !(st.expansion.is_finite() && st.expansion > 0.0) || (st.channels as f64 * st.expansion).round() < 2.0 {
                return fail(format!("stage {idx} expansion {} is too small", st.expansion));
            }
            if i > 0 && st.channels != 2 * self.stages[i - 1].channels {
                return fail(format!(
                    "stage {idx} channels {} must double stage {} channels {}",
                    st.channels,
                    i,
                    self.stages[i - 1].channels
                ));
            }
        }
        Ok(())
    }

    /// Spatial size of stage `i` (0-based) output for an `h×w` input.
    pub fn stage_grid(&self, stage: usize, input: (usize, usize)) -> (usize, usize) {
        let f = 1 << (stage + 2);
        (input.0 / f, input.1 / f)
    }

    /// Checks that an `h×w` input is accepted: sides divisible by 32 and
    /// every stage grid tiled by that stage's reductions.
    pub fn validate_input(&self, input: (usize, usize)) -> Result<()> {
        if input.0 == 0 || input.1 == 0 || !input.0.is_multiple_of(INPUT_DIVISOR) || !input.1.is_multiple_of(INPUT_DIVISOR) {
            return Err(Error::Contract(format!(
                "input {}×{} must have both sides divisible by {INPUT_DIVISOR}",
                input.0, input.1
            )));
        }
        for (i, st) in self.stages.iter().enumerate() {
            let grid = self.stage_grid(i, input);
            st.attention()
                .validate_grid(grid)
                .map_err(|e| Error::Config(format!("stage {}: {e}", i + 1)))?;
        }
        Ok(())
    }
}

/// Ablation switches applied uniformly to every block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockOptions {
    pub pattern: ConnectionPattern,
    pub ffn: FfnKind,
}
