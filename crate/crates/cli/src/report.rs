use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, ValueEnum};
use evit_core::analysis::{count_macs, count_params};
use evit_core::backbone::{BlockOptions, BuildOptions, Evit, VariantName};

use crate::{Ffn, Pattern, Variant};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Report {
    /// Parameter totals only.
    Params,
    /// Parameter and FLOP totals with per-module shares.
    Flops,
    /// Per-layer table followed by the summary.
    Table,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    variant: Variant,

    /// Square input side; must be divisible by 32.
    #[arg(long, default_value_t = 224)]
    input: usize,

    #[arg(long, value_enum, default_value = "bifovea")]
    pattern: Pattern,

    #[arg(long, value_enum, default_value = "bffn")]
    ffn: Ffn,

    #[arg(long, value_enum, default_value = "table")]
    report: Report,

    /// Emit machine-readable CSV rows instead of the text report.
    #[arg(long)]
    csv: bool,
}

pub fn run(args: BuildArgs) -> Result<ExitCode> {
    let spec = VariantName::from(args.variant).spec();
    spec.validate_input((args.input, args.input))?;
    let options = BuildOptions {
        block: BlockOptions {
            pattern: args.pattern.into(),
            ffn: args.ffn.into(),
        },
        ..BuildOptions::seeded(0)
    };
    let model = Evit::build(&spec, options)?;
    let report = match args.report {
        Report::Params => count_params(&model),
        Report::Flops | Report::Table => count_macs(&model, (args.input, args.input))?,
    };
    let text = match (args.csv, args.report) {
        (true, _) => report.render_csv(),
        (false, Report::Table) => report.render_table(),
        (false, _) => report.render_summary(),
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
