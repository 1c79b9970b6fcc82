//! Brute-force reference implementations shared by the integration suites.
//! Every oracle works on flat slices with explicit index arithmetic and
//! shares no code with the library kernels.
#![allow(dead_code)]

use evit_core::attention::FoveaAttention;
use evit_core::feedforward::FeedForward;
use evit_core::nn::{Conv, ConvKind, LayerNorm, Linear, ParamStore};
use evit_core::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Sliding-window cross-correlation with explicit zero padding.
#[allow(clippy::too_many_arguments)]
pub fn conv(x: &[f64], xs: [usize; 4], w: &[f64], ws: [usize; 4], bias: Option<&[f64]>, stride: usize, pad: usize, depthwise: bool) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, wd] = xs;
    let [o, wc, kh, kw] = ws;
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |bv| bv[oc]);
                    for ic in 0..wc {
                        let xc = if depthwise { oc } else { ic };
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                let xv = x[((b * c + xc) * h + iy as usize) * wd + ix as usize];
                                acc += xv * w[((oc * wc + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    (out, [n, o, ho, wo])
}

/// Two-pass layer normalization over rows of length `d`.
pub fn layernorm(x: &[f64], d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        for (i, v) in row.iter().enumerate() {
            out.push((v - mean) / (var + eps).sqrt() * gamma[i] + beta[i]);
        }
    }
    out
}

pub fn softmax(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(d) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    out
}

pub fn gelu(v: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * v * (1.0 + (c * (v + 0.044715 * v * v * v)).tanh())
}

fn p(store: &ParamStore, id: evit_core::nn::ParamId) -> &[f64] {
    store.get(id).data()
}

/// Rows of `x` (`len/din` of them) through a linear layer.
pub fn linear(store: &ParamStore, lin: &Linear, x: &[f64]) -> Vec<f64> {
    let (w, b) = (p(store, lin.weight), p(store, lin.bias));
    let rows = x.len() / lin.in_dim;
    let mut out = matmul(x, w, rows, lin.in_dim, lin.out_dim);
    for r in 0..rows {
        for j in 0..lin.out_dim {
            out[r * lin.out_dim + j] += b[j];
        }
    }
    out
}

pub fn conv_layer(store: &ParamStore, layer: &Conv, map: &[f64], shape: [usize; 4]) -> (Vec<f64>, [usize; 4]) {
    let w = store.get(layer.weight);
    let ws: [usize; 4] = w.shape().try_into().unwrap();
    conv(map, shape, w.data(), ws, Some(p(store, layer.bias)), layer.stride, layer.padding, layer.kind == ConvKind::Depthwise)
}

pub fn norm_layer(store: &ParamStore, ln: &LayerNorm, x: &[f64]) -> Vec<f64> {
    layernorm(x, ln.dim, p(store, ln.gamma), p(store, ln.beta), 1e-5)
}

/// `[N·C]` tokens (one image) → `[C, H, W]` map.
pub fn to_map(tokens: &[f64], c: usize) -> Vec<f64> {
    let n = tokens.len() / c;
    let mut map = vec![0.0; tokens.len()];
    for t in 0..n {
        for ch in 0..c {
            map[ch * n + t] = tokens[t * c + ch];
        }
    }
    map
}

pub fn to_tokens(map: &[f64], c: usize) -> Vec<f64> {
    let n = map.len() / c;
    let mut tokens = vec![0.0; map.len()];
    for t in 0..n {
        for ch in 0..c {
            tokens[t * c + ch] = map[ch * n + t];
        }
    }
    tokens
}

/// Multi-head attention written as explicit loops over queries, keys, heads,
/// and channels, for a single image of `grid` tokens.
pub fn attention(store: &ParamStore, attn: &FoveaAttention, x: &[f64], grid: (usize, usize)) -> Vec<f64> {
    let c = attn.dim;
    let n = grid.0 * grid.1;
    let (heads, d) = (attn.heads, attn.dim / attn.heads);
    let q = linear(store, &attn.q, x);
    let (source, nk) = match &attn.reduce {
        Some(r) => {
            let (m, s) = conv_layer(store, r, &to_map(x, c), [1, c, grid.0, grid.1]);
            (to_tokens(&m, c), s[2] * s[3])
        }
        None => (x.to_vec(), n),
    };
    let k = linear(store, &attn.k, &source);
    let v = linear(store, &attn.v, &source);
    let mut merged = vec![0.0; n * c];
    for h in 0..heads {
        for i in 0..n {
            let mut scores = vec![0.0; nk];
            for (j, s) in scores.iter_mut().enumerate() {
                let mut dot = 0.0;
                for e in 0..d {
                    dot += q[i * c + h * d + e] * k[j * c + h * d + e];
                }
                *s = dot / (d as f64).sqrt();
            }
            let a = softmax(&scores, nk);
            for e in 0..d {
                let mut acc = 0.0;
                for j in 0..nk {
                    acc += a[j] * v[j * c + h * d + e];
                }
                merged[i * c + h * d + e] = acc;
            }
        }
    }
    linear(store, &attn.out, &merged)
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Feedforward for one image's tokens, step by step per hidden topology.
pub fn feedforward(store: &ParamStore, ffn: &FeedForward, x: &[f64], grid: (usize, usize)) -> Vec<f64> {
    let h = linear(store, &ffn.fc1, x);
    let hid = ffn.fc1.out_dim;
    let convs = ffn.hidden_convs();
    let shape = |ch| [1, ch, grid.0, grid.1];
    let act: Vec<f64> = match convs.len() {
        0 => h,
        1 => {
            let map = to_map(&h, hid);
            let (local, _) = conv_layer(store, convs[0], &map, shape(hid));
            to_tokens(&add(&map, &local), hid)
        }
        _ => {
            let map = to_map(&h, hid);
            let plane = grid.0 * grid.1;
            let na = convs[0].out_channels;
            let nb = hid - na;
            let a = &map[..na * plane];
            let b = &map[na * plane..];
            let (s, _) = conv_layer(store, convs[0], a, shape(na));
            let fused = add(&s[..nb * plane], b);
            let (d1, _) = conv_layer(store, convs[1], &fused, shape(nb));
            let (d2, _) = conv_layer(store, convs[2], &d1, shape(nb));
            let mut merged = s;
            merged.extend(d2);
            to_tokens(&merged, hid)
        }
    }
    .into_iter()
    .map(gelu)
    .collect();
    linear(store, &ffn.fc2, &act)
}


/// Largest relative error between tape and central-difference gradients of
/// `Σ R ⊙ f(x…)` over every element of every input.
pub fn op_gradient_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> evit_core::Result<Var>) -> f64 {
    const STEP: f64 = 1e-5;
    let loss_of = |tape: &mut Tape, vars: &[Var]| -> Var {
        let y = f(tape, vars).unwrap();
        let shape = tape.shape(y).to_vec();
        let weights = uniform(&mut rng(99), &shape, 1.0);
        let r = tape.constant(weights);
        let prod = tape.mul(y, r).unwrap();
        tape.sum(prod)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().enumerate().map(|(i, t)| tape.param(format!("in{i}"), t.clone())).collect();
    let loss = loss_of(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let eval = |perturbed: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.constant(t.clone())).collect();
        let loss = loss_of(&mut tape, &vars);
        tape.value(loss).item().unwrap()
    };
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.by_name(&format!("in{i}")).unwrap();
        for j in 0..input.numel() {
            let shifted = |delta: f64| {
                let mut all = inputs.to_vec();
                let mut d = input.to_vec();
                d[j] += delta;
                all[i] = Tensor::new(input.shape().to_vec(), d).unwrap();
                eval(&all)
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = analytic.data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

pub fn check_op(label: &str, inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> evit_core::Result<Var>) {
    let worst = op_gradient_error(inputs, f);
    assert!(worst <= 1e-4, "{label}: max relative error {worst:e}");
}

