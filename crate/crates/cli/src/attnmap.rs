use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use evit_core::analysis::{attention_maps, write_attention_maps};
use evit_core::attention::Fovea;
use evit_core::backbone::checkpoint;
use evit_core::harness::{Split, ToyDataset};
use evit_core::image::Image;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Which {
    Sfa,
    Dfa,
}

#[derive(Args, Debug)]
pub struct AttnmapArgs {
    #[arg(long)]
    checkpoint: PathBuf,

    /// PGM/PPM input; a synthetic shape image is used when omitted.
    #[arg(long)]
    image: Option<PathBuf>,

    /// Side of the synthetic image.
    #[arg(long, default_value_t = 224)]
    input: usize,

    /// 1-based stage index.
    #[arg(long, default_value_t = 3)]
    stage: usize,

    /// 1-based block index within the stage.
    #[arg(long, default_value_t = 1)]
    block: usize,

    #[arg(long, value_enum, default_value = "sfa")]
    fovea: Which,

    #[arg(long, default_value = "attnmaps")]
    out: PathBuf,
}

pub fn run(args: AttnmapArgs) -> Result<ExitCode> {
    if !args.checkpoint.is_file() {
        bail!(evit_core::Error::Checkpoint {
            path: args.checkpoint.clone(),
            msg: "no such file".into(),
        });
    }
    let model = checkpoint::load(&args.checkpoint)?;
    let image = match &args.image {
        Some(path) => Image::read(path)?.to_tensor(),
        None => {
            let data = ToyDataset::shapes(1, args.input, 0.05, 0, Split::Test)?;
            data.batch(&[0])?.0
        }
    };
    let fovea = match args.fovea {
        Which::Sfa => Fovea::Shallow,
        Which::Dfa => Fovea::Deep,
    };
    let maps = attention_maps(&model, &image, args.stage, args.block, fovea)?;
    for path in write_attention_maps(&maps, &args.out)? {
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
