mod attnmap;
mod gradcheck;
mod report;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evit_core::attention::ConnectionPattern;
use evit_core::backbone::VariantName;
use evit_core::feedforward::FfnKind;

/// Eagle-vision transformer toolkit.
#[derive(Parser, Debug)]
#[command(name = "evit", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a variant and print its parameter/FLOP report.
    Build(report::BuildArgs),
    /// Finite-difference check of the reduced model's gradients.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Train on the toy dataset described by a config file.
    Train(train::TrainArgs),
    /// Export per-head attention maps as PGM images.
    Attnmap(attnmap::AttnmapArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Variant {
    Tiny,
    Small,
    Base,
    Large,
}

impl From<Variant> for VariantName {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Tiny => VariantName::Tiny,
            Variant::Small => VariantName::Small,
            Variant::Base => VariantName::Base,
            Variant::Large => VariantName::Large,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Pattern {
    Parallel,
    Cascade,
    Bifovea,
}

impl From<Pattern> for ConnectionPattern {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Parallel => ConnectionPattern::Parallel,
            Pattern::Cascade => ConnectionPattern::Cascade,
            Pattern::Bifovea => ConnectionPattern::BiFovea,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Ffn {
    Ffn,
    Cffn,
    Bffn,
}

impl From<Ffn> for FfnKind {
    fn from(f: Ffn) -> Self {
        match f {
            Ffn::Ffn => FfnKind::Ffn,
            Ffn::Cffn => FfnKind::Cffn,
            Ffn::Bffn => FfnKind::Bffn,
        }
    }
}

/// Exit status for a failed command: 2 for bad input (arguments, configs,
/// datasets, checkpoints, missing files), 3 for non-finite numerics, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    use evit_core::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::NonFinite(_)) => 3,
        Some(Error::Io(e)) if e.kind() == std::io::ErrorKind::NotFound => 2,
        Some(Error::Contract(_) | Error::Config(_) | Error::Parse { .. } | Error::Dataset(_) | Error::Checkpoint { .. } | Error::Index(_) | Error::Shape { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => report::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
        Command::Train(args) => train::run(args),
        Command::Attnmap(args) => attnmap::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
