use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use evit_core::backbone::checkpoint;
use evit_core::harness::{load_dataset, metrics_csv, train, RunConfig};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Where to write `step,loss,accuracy` rows.
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,

    #[arg(long, default_value = "model.ckpt")]
    checkpoint: PathBuf,

    /// Override `optim.steps`.
    #[arg(long)]
    steps: Option<usize>,

    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

pub fn run(args: TrainArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(steps) = args.steps {
        cfg.optim.steps = steps;
    }
    cfg.validate()?;
    if args.print_config {
        print!("{}", cfg.render());
        return Ok(ExitCode::SUCCESS);
    }
    let data = load_dataset(&cfg)?;
    eprintln!("training {} on {} images ({} classes), seed {}", cfg.spec().name, data.len(), data.num_classes, cfg.seed);
    let outcome = train(&cfg, &data)?;
    fs::write(&args.metrics, metrics_csv(&outcome.metrics)).with_context(|| format!("writing {}", args.metrics.display()))?;
    checkpoint::save(&outcome.model, &args.checkpoint).with_context(|| format!("writing {}", args.checkpoint.display()))?;
    if let Some(last) = outcome.metrics.last() {
        println!("step {} loss {:.6} batch accuracy {:.3}", last.step, last.loss, last.accuracy);
    }
    println!("train accuracy {:.4}", outcome.train_accuracy);
    println!("checkpoint {}", args.checkpoint.display());
    Ok(ExitCode::SUCCESS)
}
