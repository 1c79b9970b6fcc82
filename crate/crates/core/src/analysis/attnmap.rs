use std::fs;
use std::path::{Path, PathBuf};

use crate::attention::{AttentionProbe, Fovea};
use crate::backbone::Evit;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::ForwardCtx;
use crate::tensor::Tensor;

/// Query-averaged attention of one head, laid out on the stage grid.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub stage: usize,
    pub block: usize,
    pub fovea: Fovea,
    pub head: usize,
    pub height: usize,
    pub width: usize,
    /// Mean weight each key receives, upsampled to the stage grid.
    pub raw: Vec<f64>,
    /// `raw` min-max scaled into `[0, 1]`.
    pub normalized: Vec<f64>,
}

impl AttentionMap {
    pub fn to_image(&self) -> Image {
        let pixels = self.normalized.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
        Image::gray(self.width, self.height, pixels)
    }

    pub fn file_name(&self) -> String {
        format!("stage{}_block{}_{}_head{}.pgm", self.stage, self.block, self.fovea, self.head + 1)
    }
}

/// Scales into `[0, 1]`; a constant input maps to 0.5 everywhere.
pub fn normalize_min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span.is_nan() || span <= 1e-15 * hi.abs().max(1.0) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / span).collect()
}

/// Runs `image` (`[3,H,W]` or `[1,3,H,W]`) and returns one map per head of
/// the chosen fovea at 1-based `(stage, block)`.
pub fn attention_maps(model: &Evit, image: &Tensor, stage: usize, block: usize, fovea: Fovea) -> Result<Vec<AttentionMap>> {
    let stages = model.stages.len();
    if stage == 0 || stage > stages {
        return Err(Error::Index(format!("stage {stage} out of range 1..={stages}")));
    }
    let blocks = model.stages[stage - 1].blocks.len();
    if block == 0 || block > blocks {
        return Err(Error::Index(format!("block {block} out of range 1..={blocks} in stage {stage}")));
    }
    let batch = match image.rank() {
        3 => image.reshape(&[1, image.shape()[0], image.shape()[1], image.shape()[2]])?,
        _ => image.clone(),
    };
    if batch.shape()[0] != 1 {
        return Err(Error::shape("attention_maps", format!("expected a single image, got {:?}", image.shape())));
    }

    let mut ctx = ForwardCtx::inference(model.params());
    ctx.probe = Some(AttentionProbe::at(stage, block));
    let x = ctx.tape.constant(batch);
    model.forward(&mut ctx, x)?;
    let probe = ctx.probe.take().unwrap_or_default();
    let record = probe
        .records
        .into_iter()
        .find(|r| r.fovea == fovea)
        .ok_or_else(|| Error::Contract(format!("no {fovea} attention recorded at stage {stage} block {block}")))?;

    let [_, heads, nq, nk] = record.weights.shape().try_into().map_err(|_| Error::shape("attention_maps", "weights must be rank 4"))?;
    let (qh, qw) = record.query_grid;
    let (kh, kw) = record.key_grid;
    let w = record.weights.data();
    let mut maps = Vec::with_capacity(heads);
    for head in 0..heads {
        let mut mean = vec![0.0; nk];
        for q in 0..nq {
            let row = &w[(head * nq + q) * nk..][..nk];
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nq as f64);
        // Nearest-neighbour upsampling from the key grid to the stage grid.
        let raw: Vec<f64> = (0..qh * qw)
            .map(|i| {
                let (y, x) = (i / qw, i % qw);
                mean[(y * kh / qh) * kw + x * kw / qw]
            })
            .collect();
        maps.push(AttentionMap {
            stage,
            block,
            fovea,
            head,
            height: qh,
            width: qw,
            normalized: normalize_min_max(&raw),
            raw,
        });
    }
    Ok(maps)
}

/// Writes each map as a binary PGM inside `dir`, returning the paths.
pub fn write_attention_maps(maps: &[AttentionMap], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    maps.iter()
        .map(|m| {
            let path = dir.join(m.file_name());
            m.to_image().write(&path)?;
            Ok(path)
        })
        .collect()
}
