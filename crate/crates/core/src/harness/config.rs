//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attention::ConnectionPattern;
use crate::backbone::{BlockOptions, BuildOptions, StageConfig, VariantName, VariantSpec, HEAD_CHANNELS};
use crate::error::{Error, Result};
use crate::feedforward::FfnKind;

pub const SEED_ENV: &str = "EVIT_SEED";

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Architecture {
    Variant(VariantName),
    /// Quarter-width Tiny with one block per stage.
    ReducedTiny,
    Custom {
        stem_channels: usize,
        stages: [StageConfig; 4],
        head_channels: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Filled circles (class 0) versus filled squares (class 1).
    Shapes { samples: usize, noise: f64 },
    /// One sub-directory per class holding PGM/PPM files.
    Directory(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub cosine: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 300,
            batch_size: 32,
            cosine: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub architecture: Architecture,
    pub num_classes: usize,
    pub pattern: ConnectionPattern,
    pub ffn: FfnKind,
    pub zero_head: bool,
    /// Square image side; must be divisible by 32.
    pub input: usize,
    pub optim: OptimConfig,
    pub data: DataSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            architecture: Architecture::ReducedTiny,
            num_classes: 2,
            pattern: ConnectionPattern::default(),
            ffn: FfnKind::default(),
            zero_head: true,
            input: 32,
            optim: OptimConfig::default(),
            data: DataSource::Shapes { samples: 256, noise: 0.1 },
        }
    }
}

fn stage_text(s: &StageConfig) -> String {
    format!("{} {} {} {} {} {}", s.blocks, s.channels, s.heads, s.sfa_reduction, s.dfa_reduction, s.expansion)
}

impl RunConfig {
    pub fn spec(&self) -> VariantSpec {
        let spec = match &self.architecture {
            Architecture::Variant(v) => v.spec(),
            Architecture::ReducedTiny => VariantSpec::reduced_tiny(self.num_classes),
            Architecture::Custom {
                stem_channels,
                stages,
                head_channels,
            } => VariantSpec {
                name: "custom".into(),
                stem_channels: *stem_channels,
                stages: *stages,
                head_channels: *head_channels,
                num_classes: self.num_classes,
            },
        };
        spec.with_classes(self.num_classes)
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            seed: self.seed,
            block: BlockOptions {
                pattern: self.pattern,
                ffn: self.ffn,
            },
            zero_head: self.zero_head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec();
        spec.validate()?;
        spec.validate_input((self.input, self.input))?;
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lr.is_finite()) || !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
            return Err(Error::Config("optim.lr must be positive and optim.weight_decay non-negative".into()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps.is_nan() || o.eps <= 0.0 {
            return Err(Error::Config("optim betas must lie in [0, 1) and eps must be positive".into()));
        }
        if o.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be positive".into()));
        }
        if let DataSource::Shapes { samples, noise } = self.data {
            if samples == 0 || !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Config("data.samples must be positive and data.noise non-negative".into()));
            }
        }
        Ok(())
    }

    /// Replaces the seed with `EVIT_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", &self.seed);
        match &self.architecture {
            Architecture::Variant(v) => kv("model.variant", v),
            Architecture::ReducedTiny => kv("model.variant", &"reduced-tiny"),
            Architecture::Custom {
                stem_channels,
                stages,
                head_channels,
            } => {
                kv("model.variant", &"custom");
                kv("model.stem_channels", stem_channels);
                for (i, st) in stages.iter().enumerate() {
                    kv(&format!("model.stage{}", i + 1), &stage_text(st));
                }
                kv("model.head_channels", head_channels);
            }
        }
        kv("model.num_classes", &self.num_classes);
        kv("model.pattern", &self.pattern);
        kv("model.ffn", &self.ffn);
        kv("model.zero_head", &self.zero_head);
        kv("model.input", &self.input);
        let o = &self.optim;
        kv("optim.lr", &o.lr);
        kv("optim.weight_decay", &o.weight_decay);
        kv("optim.beta1", &o.beta1);
        kv("optim.beta2", &o.beta2);
        kv("optim.eps", &o.eps);
        kv("optim.steps", &o.steps);
        kv("optim.batch_size", &o.batch_size);
        kv("optim.cosine", &o.cosine);
        match &self.data {
            DataSource::Shapes { samples, noise } => {
                kv("data.source", &"shapes");
                kv("data.samples", samples);
                kv("data.noise", noise);
            }
            DataSource::Directory(dir) => {
                kv("data.source", &"directory");
                kv("data.path", &dir.display());
            }
        }
        s
    }

    /// Parses config text; keys not given keep their defaults. `origin`
    /// names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut variant = None;
        let mut stem = None;
        let mut head = None;
        let mut stages: [Option<StageConfig>; 4] = [None; 4];
        let mut source = None;
        let mut samples = 256;
        let mut noise = 0.1;
        let mut path = None;

        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                msg,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            fn val<T: FromStr>(v: &str, key: &str, err: &dyn Fn(String) -> Error) -> Result<T> {
                v.parse().map_err(|_| err(format!("invalid value {v:?} for {key}")))
            }
            match key {
                "seed" => cfg.seed = val(value, key, &err)?,
                "model.variant" => variant = Some(value.to_string()),
                "model.stem_channels" => stem = Some(val(value, key, &err)?),
                "model.head_channels" => head = Some(val(value, key, &err)?),
                "model.stage1" | "model.stage2" | "model.stage3" | "model.stage4" => {
                    let idx = key.as_bytes()[11] as usize - b'1' as usize;
                    let f: Vec<&str> = value.split_whitespace().collect();
                    if f.len() != 6 {
                        return Err(err(format!("{key} needs `blocks channels heads sfa_reduction dfa_reduction expansion`")));
                    }
                    stages[idx] = Some(StageConfig::new(
                        val(f[0], key, &err)?,
                        val(f[1], key, &err)?,
                        val(f[2], key, &err)?,
                        val(f[3], key, &err)?,
                        val(f[4], key, &err)?,
                        val(f[5], key, &err)?,
                    ));
                }
                "model.num_classes" => cfg.num_classes = val(value, key, &err)?,
                "model.pattern" => cfg.pattern = val(value, key, &err)?,
                "model.ffn" => cfg.ffn = val(value, key, &err)?,
                "model.zero_head" => cfg.zero_head = val(value, key, &err)?,
                "model.input" => cfg.input = val(value, key, &err)?,
                "optim.lr" => cfg.optim.lr = val(value, key, &err)?,
                "optim.weight_decay" => cfg.optim.weight_decay = val(value, key, &err)?,
                "optim.beta1" => cfg.optim.beta1 = val(value, key, &err)?,
                "optim.beta2" => cfg.optim.beta2 = val(value, key, &err)?,
                "optim.eps" => cfg.optim.eps = val(value, key, &err)?,
                "optim.steps" => cfg.optim.steps = val(value, key, &err)?,
                "optim.batch_size" => cfg.optim.batch_size = val(value, key, &err)?,
                "optim.cosine" => cfg.optim.cosine = val(value, key, &err)?,
                "data.source" => source = Some(value.to_string()),
                "data.samples" => samples = val(value, key, &err)?,
                "data.noise" => noise = val(value, key, &err)?,
                "data.path" => path = Some(PathBuf::from(value)),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }

        let cfg_err = |msg: String| Error::Config(format!("{origin}: {msg}"));
        cfg.architecture = match variant.as_deref() {
            None | Some("reduced-tiny") => Architecture::ReducedTiny,
            Some("custom") => {
                let mut table = [StageConfig::new(0, 0, 0, 0, 0, 0.0); 4];
                for (i, s) in stages.iter().enumerate() {
                    table[i] = s.ok_or_else(|| cfg_err(format!("custom model needs model.stage{}", i + 1)))?;
                }
                Architecture::Custom {
                    stem_channels: stem.ok_or_else(|| cfg_err("custom model needs model.stem_channels".into()))?,
                    stages: table,
                    head_channels: head.unwrap_or(HEAD_CHANNELS),
                }
            }
            Some(name) => Architecture::Variant(name.parse()?),
        };
        if !matches!(cfg.architecture, Architecture::Custom { .. }) && (stem.is_some() || head.is_some() || stages.iter().any(Option::is_some)) {
            return Err(cfg_err("stage table keys require model.variant = custom".into()));
        }
        cfg.data = match source.as_deref() {
            None | Some("shapes") => DataSource::Shapes { samples, noise },
            Some("directory") => DataSource::Directory(path.ok_or_else(|| cfg_err("data.source = directory needs data.path".into()))?),
            Some(other) => return Err(cfg_err(format!("unknown data.source {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.render(), "mem").unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::parse("seed = 1\n\nmodel.bogus = 3\n", "run.cfg").unwrap_err();
        assert_eq!(e.to_string(), RunConfig::parse("seed = 1\n\nmodel.bogus = 3\n", "run.cfg").unwrap_err().to_string());
        match e {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_requires_full_table() {
        assert!(RunConfig::parse("model.variant = custom\nmodel.stem_channels = 8\n", "mem").is_err());
        assert!(RunConfig::parse("model.stage1 = 1 8 1 1 1 2\n", "mem").is_err());
    }
}
