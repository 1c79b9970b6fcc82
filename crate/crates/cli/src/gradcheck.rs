use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use evit_core::backbone::{BlockOptions, VariantSpec};
use evit_core::harness::{gradcheck, GradcheckOptions};
use evit_core::tape::{AdjointFault, OpKind};

use crate::{Ffn, Pattern};

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Number of scalar parameters to probe.
    #[arg(short = 'k', long, default_value_t = 10)]
    samples: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "bifovea")]
    pattern: Pattern,

    #[arg(long, value_enum, default_value = "bffn")]
    ffn: Ffn,

    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,

    /// Scale the softmax adjoint by this factor (negative control).
    #[arg(long, hide = true)]
    inject_fault: Option<f64>,
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode> {
    if args.samples == 0 {
        eprintln!("warning: --samples 0 checks nothing; passing vacuously");
    }
    let opts = GradcheckOptions {
        samples: args.samples,
        seed: args.seed,
        tolerance: args.tolerance,
        block: BlockOptions {
            pattern: args.pattern.into(),
            ffn: args.ffn.into(),
        },
        fault: args.inject_fault.map(|factor| AdjointFault { kind: OpKind::Softmax, factor }),
        ..GradcheckOptions::default()
    };
    let report = gradcheck(&VariantSpec::reduced_tiny(2), &opts)?;
    println!("{:<44} {:<12} {:>14} {:>14} {:>10}", "parameter", "module", "analytic", "numeric", "rel err");
    for e in &report.entries {
        println!("{:<44} {:<12} {:>14.6e} {:>14.6e} {:>10.2e}", format!("{}[{}]", e.name, e.index), e.module.to_string(), e.analytic, e.numeric, e.rel_error);
    }
    let verdict = if report.passed() { "pass" } else { "FAIL" };
    println!("max relative error {:.3e} (tolerance {:.0e}): {verdict}", report.max_rel_error(), report.tolerance);
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
