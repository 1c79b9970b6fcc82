use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LAYERNORM_EPS: f64 = 1e-5;

/// Per-row statistics saved by [`layernorm`] for its adjoint.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub rstd: Vec<f64>,
}

/// Normalizes each row over the last axis, then applies `gamma`/`beta`.
pub fn layernorm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<(Tensor, LayerNormCache)> {
    let c = *x.shape().last().ok_or_else(|| Error::shape("layernorm", "scalar input"))?;
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::dim("layernorm", x.shape(), gamma.shape()));
    }
    let rows = x.numel() / c;
    let mut out = Vec::with_capacity(x.numel());
    let mut normalized = Vec::with_capacity(x.numel());
    let mut rstd = Vec::with_capacity(rows);
    for row in x.data().chunks_exact(c) {
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let r = 1.0 / (var + eps).sqrt();
        rstd.push(r);
        for ((&v, &g), &b) in row.iter().zip(gamma.data()).zip(beta.data()) {
            let xhat = (v - mean) * r;
            normalized.push(xhat);
            out.push(xhat * g + b);
        }
    }
    Ok((Tensor::from_parts(x.shape().to_vec(), out), LayerNormCache { normalized, rstd }))
}

/// Adjoints of [`layernorm`] for input, gamma, and beta.
pub fn layernorm_backward(cache: &LayerNormCache, gamma: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let c = gamma.numel();
    let mut gx = Vec::with_capacity(grad.numel());
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for ((grow, xrow), &r) in grad.data().chunks_exact(c).zip(cache.normalized.chunks_exact(c)).zip(&cache.rstd) {
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for i in 0..c {
            let gh = grow[i] * gamma.data()[i];
            mean_g += gh;
            mean_gx += gh * xrow[i];
            ggamma[i] += grow[i] * xrow[i];
            gbeta[i] += grow[i];
        }
        mean_g /= c as f64;
        mean_gx /= c as f64;
        for i in 0..c {
            let gh = grow[i] * gamma.data()[i];
            gx.push(r * (gh - mean_g - xrow[i] * mean_gx));
        }
    }
    (
        Tensor::from_parts(grad.shape().to_vec(), gx),
        Tensor::from_parts(vec![c], ggamma),
        Tensor::from_parts(vec![c], gbeta),
    )
}

/// Max-subtracted softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let n = x.shape().last().copied().unwrap_or(1);
    let mut out = Vec::with_capacity(x.numel());
    for row in x.data().chunks_exact(n) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for e in &mut out[start..] {
            *e /= total;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// Adjoint of [`softmax`] given its output `y`.
pub fn softmax_backward(y: &Tensor, grad: &Tensor) -> Tensor {
    let n = y.shape().last().copied().unwrap_or(1);
    let mut gx = Vec::with_capacity(y.numel());
    for (yrow, grow) in y.data().chunks_exact(n).zip(grad.data().chunks_exact(n)) {
        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
        gx.extend(yrow.iter().zip(grow).map(|(y, g)| y * (g - dot)));
    }
    Tensor::from_parts(y.shape().to_vec(), gx)
}
