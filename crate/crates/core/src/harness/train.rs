use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::Evit;
use crate::error::{Error, Result};
use crate::harness::{AdamW, RunConfig, ToyDataset};
use crate::nn::ForwardCtx;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    /// Mini-batch loss before this step's update.
    pub loss: f64,
    /// Mini-batch accuracy before this step's update.
    pub accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Evit,
    pub metrics: Vec<StepMetrics>,
    /// Accuracy over the whole training set after the last update.
    pub train_accuracy: f64,
}

pub fn metrics_csv(metrics: &[StepMetrics]) -> String {
    let mut s = String::from("step,loss,accuracy\n");
    for m in metrics {
        let _ = writeln!(s, "{},{},{}", m.step, m.loss, m.accuracy);
    }
    s
}

fn argmax_accuracy(logits: &crate::Tensor, labels: &[usize]) -> usize {
    let k = logits.shape()[1];
    logits
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            let best = row.iter().enumerate().fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            best == y
        })
        .count()
}

/// Fraction of `data` classified correctly, evaluated in chunks of `batch`.
pub fn evaluate(model: &Evit, data: &ToyDataset, batch: usize) -> Result<f64> {
    let mut correct = 0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (x, y) = data.batch(chunk)?;
        correct += argmax_accuracy(&model.predict(&x)?, &y);
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_dataset(cfg: &RunConfig, data: &ToyDataset) -> Result<()> {
    if data.num_classes != cfg.num_classes {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, config expects model.num_classes = {}",
            data.num_classes, cfg.num_classes
        )));
    }
    if data.side() != cfg.input {
        return Err(Error::Dataset(format!("dataset images are {0}x{0}, config expects model.input = {1}", data.side(), cfg.input)));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= cfg.num_classes) {
        return Err(Error::Dataset(format!("label {bad} out of range for {} classes", cfg.num_classes)));
    }
    Ok(())
}

/// Cross-entropy training with AdamW. Mini-batches are drawn from a seeded
/// permutation reshuffled every epoch, so runs are bitwise reproducible.
pub fn train(cfg: &RunConfig, data: &ToyDataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_dataset(cfg, data)?;
    let mut model = Evit::build(&cfg.spec(), cfg.build_options())?;
    let mut opt = AdamW::new(cfg.optim.clone(), model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let batch = cfg.optim.batch_size.min(data.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut metrics = Vec::with_capacity(cfg.optim.steps);

    for step in 0..cfg.optim.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let (x, y) = data.batch(&order[cursor..cursor + batch])?;
        cursor += batch;

        let mut ctx = ForwardCtx::training(model.params());
        let images = ctx.tape.constant(x);
        let out = model.forward(&mut ctx, images)?;
        let loss = ctx.tape.cross_entropy(out.logits, &y)?;
        let loss_value = ctx.tape.value(loss).item()?;
        if !loss_value.is_finite() {
            return Err(Error::NonFinite(format!("loss is {loss_value} at step {step}")));
        }
        let accuracy = argmax_accuracy(ctx.tape.value(out.logits), &y) as f64 / batch as f64;
        let grads = ctx.tape.backward(loss)?;
        drop(ctx);
        opt.step(model.params_mut(), &grads)?;
        metrics.push(StepMetrics {
            step,
            loss: loss_value,
            accuracy,
        });
    }
    let train_accuracy = evaluate(&model, data, 64)?;
    Ok(TrainOutcome {
        model,
        metrics,
        train_accuracy,
    })
}
