use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::ModuleKind;
use crate::backbone::{BlockOptions, BuildOptions, Evit, VariantSpec};
use crate::error::{Error, Result};
use crate::harness::{Split, ToyDataset};
use crate::nn::ForwardCtx;
use crate::tape::{AdjointFault, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Number of scalar parameters to probe.
    pub samples: usize,
    pub seed: u64,
    /// Central-difference half step.
    pub step: f64,
    pub tolerance: f64,
    /// Gradients below this magnitude are compared absolutely.
    pub floor: f64,
    /// Square input side; 64 keeps every attention layer above one key.
    pub input: usize,
    pub block: BlockOptions,
    pub fault: Option<AdjointFault>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            samples: 10,
            seed: 0,
            step: 1e-5,
            tolerance: 1e-3,
            floor: 1e-6,
            input: 64,
            block: BlockOptions::default(),
            fault: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckEntry {
    pub name: String,
    pub module: ModuleKind,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub entries: Vec<GradcheckEntry>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }

    pub fn modules(&self) -> Vec<ModuleKind> {
        let mut m: Vec<_> = self.entries.iter().map(|e| e.module).collect();
        m.sort();
        m.dedup();
        m
    }
}

fn loss_of(model: &Evit, images: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut ctx = ForwardCtx::inference(model.params());
    let x = ctx.tape.constant(images.clone());
    let out = model.forward(&mut ctx, x)?;
    let loss = ctx.tape.cross_entropy(out.logits, labels)?;
    ctx.tape.value(loss).item()
}

/// Compares tape gradients of a cross-entropy loss against central
/// differences for `samples` scalar parameters, drawn round-robin over the
/// module kinds so every kind is covered once `samples` reaches their count.
pub fn gradcheck(spec: &VariantSpec, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let build = BuildOptions {
        seed: opts.seed,
        block: opts.block,
        zero_head: false,
    };
    let mut model = Evit::build(&spec.clone().with_classes(2), build)?;
    let data = ToyDataset::shapes(2, opts.input, 0.1, opts.seed, Split::Train)?;
    let (images, labels) = data.batch(&[0, 1])?;

    let tape = match opts.fault {
        Some(f) => Tape::new().with_fault(f),
        None => Tape::new(),
    };
    let mut ctx = ForwardCtx::with_tape(model.params(), tape, true);
    let x = ctx.tape.constant(images.clone());
    let out = model.forward(&mut ctx, x)?;
    let loss = ctx.tape.cross_entropy(out.logits, &labels)?;
    let grads = ctx.tape.backward(loss)?.into_named();
    drop(ctx);

    let mut by_kind: Vec<(ModuleKind, Vec<String>)> = ModuleKind::ALL.iter().map(|&k| (k, Vec::new())).collect();
    for (name, _) in model.params().iter() {
        if let Some(kind) = ModuleKind::of_param(name) {
            by_kind.iter_mut().find(|(k, _)| *k == kind).expect("listed kind").1.push(name.to_string());
        }
    }
    by_kind.retain(|(_, names)| !names.is_empty());

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(3);
    let mut entries = Vec::with_capacity(opts.samples);
    for s in 0..opts.samples {
        let (module, names) = &by_kind[s % by_kind.len()];
        let name = names[rng.random_range(0..names.len())].clone();
        let original = model.params().by_name(&name).expect("listed parameter").clone();
        let index = rng.random_range(0..original.numel());

        let probe = |delta: f64, model: &mut Evit| -> Result<f64> {
            let mut data = original.to_vec();
            data[index] += delta;
            model.params_mut().set_by_name(&name, Tensor::new(original.shape().to_vec(), data)?)?;
            loss_of(model, &images, &labels)
        };
        let plus = probe(opts.step, &mut model)?;
        let minus = probe(-opts.step, &mut model)?;
        model.params_mut().set_by_name(&name, original)?;

        let numeric = (plus - minus) / (2.0 * opts.step);
        let analytic = grads[&name].data()[index];
        if !numeric.is_finite() || !analytic.is_finite() {
            return Err(Error::NonFinite(format!("{name}[{index}]: analytic {analytic}, numeric {numeric}")));
        }
        let rel_error = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.floor);
        entries.push(GradcheckEntry {
            name,
            module: *module,
            index,
            analytic,
            numeric,
            rel_error,
        });
    }
    Ok(GradcheckReport {
        entries,
        tolerance: opts.tolerance,
    })
}
