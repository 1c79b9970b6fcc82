use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// GELU, tanh form.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(|v| 0.5 * v * (1.0 + (SQRT_2_OVER_PI * (v + GELU_CUBIC * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Tensor, grad: &Tensor) -> Tensor {
    let d = x.map(|v| {
        let t = (SQRT_2_OVER_PI * (v + GELU_CUBIC * v * v * v)).tanh();
        0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * v * v)
    });
    d.zip_map(grad, "gelu", |a, b| a * b).expect("same shape")
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "add", |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "sub", |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "mul", |x, y| x * y)
}

pub fn scale(x: &Tensor, s: f64) -> Tensor {
    x.map(|v| v * s)
}

/// Mean over the spatial axes of an `N×C×H×W` map.
pub fn avgpool_global(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::shape("avgpool_global", format!("expected N×C×H×W, got {:?}", x.shape())));
    }
    let plane = x.shape()[2] * x.shape()[3];
    let out = x.data().chunks_exact(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect();
    Ok(Tensor::from_parts(x.shape()[..2].to_vec(), out))
}

pub fn avgpool_global_backward(input_shape: &[usize], grad: &Tensor) -> Tensor {
    let plane = input_shape[2] * input_shape[3];
    let inv = 1.0 / plane as f64;
    let mut out = Vec::with_capacity(grad.numel() * plane);
    for &g in grad.data() {
        out.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::from_parts(input_shape.to_vec(), out)
}

/// Mean softmax cross-entropy of `logits[B, K]` against integer labels.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::dim("cross_entropy", logits.shape(), &[labels.len()]));
    }
    let k = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Contract(format!("label {bad} out of range for {k} classes")));
    }
    let probs = super::norm::softmax(logits);
    let b = labels.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
    }
    Ok((loss / b, probs))
}

/// Gradient of [`cross_entropy`] w.r.t. the logits, scaled by the upstream scalar.
pub fn cross_entropy_backward(probs: &Tensor, labels: &[usize], upstream: f64) -> Tensor {
    let k = probs.shape()[1];
    let b = labels.len() as f64;
    let mut g = probs.to_vec();
    for (row, &label) in g.chunks_exact_mut(k).zip(labels) {
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= upstream / b;
        }
    }
    Tensor::from_parts(probs.shape().to_vec(), g)
}
