//! Direct 2-D cross-correlation over `N×C×H×W` maps, dense and depth-wise.

use super::counter;
use super::matmul::{gemm_acc, gemm_nt, gemm_tn_acc};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// Output side length of a convolution; `None` when the kernel does not fit.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn geometry(op: &'static str, x: &Tensor, w: &Tensor, stride: usize, padding: usize, depthwise: bool) -> Result<ConvGeometry> {
    if x.rank() != 4 || w.rank() != 4 {
        return Err(Error::dim(op, x.shape(), w.shape()));
    }
    let [n, c, h, wd] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let [o, wc, kh, kw] = [w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]];
    let channels_ok = if depthwise { o == c && wc == 1 } else { wc == c };
    if !channels_ok {
        return Err(Error::dim(op, x.shape(), w.shape()));
    }
    let (Some(out_h), Some(out_w)) = (conv_out_len(h, kh, stride, padding), conv_out_len(wd, kw, stride, padding)) else {
        return Err(Error::shape(
            op,
            format!("kernel {kh}×{kw} (stride {stride}, padding {padding}) does not fit input {h}×{wd}"),
        ));
    };
    Ok(ConvGeometry {
        batch: n,
        in_channels: c,
        out_channels: o,
        height: h,
        width: wd,
        kh,
        kw,
        stride,
        padding,
        out_h,
        out_w,
    })
}

fn check_bias(op: &'static str, b: Option<&Tensor>, channels: usize) -> Result<()> {
    match b {
        Some(b) if b.shape() != [channels] => Err(Error::dim(op, &[channels], b.shape())),
        _ => Ok(()),
    }
}

/// Valid output index range along one axis for kernel tap `k`: the `o` with
/// `0 <= o*stride + k - pad < len`.
#[inline]
fn tap_range(k: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    // largest o with o*stride + k - pad <= len - 1
    let hi = if len + pad < k + 1 { 0 } else { ((len + pad - k - 1) / stride + 1).min(out_len) };
    (lo.min(hi), hi)
}

/// Accumulates one input plane against one kernel plane into an output plane.
#[inline]
fn correlate_plane(xp: &[f64], kp: &[f64], out: &mut [f64], g: &ConvGeometry) {
    for ky in 0..g.kh {
        let (oy0, oy1) = tap_range(ky, g.padding, g.stride, g.height, g.out_h);
        for kx in 0..g.kw {
            let wv = kp[ky * g.kw + kx];
            let (ox0, ox1) = tap_range(kx, g.padding, g.stride, g.width, g.out_w);
            for oy in oy0..oy1 {
                let iy = oy * g.stride + ky - g.padding;
                let xrow = &xp[iy * g.width..(iy + 1) * g.width];
                let orow = &mut out[oy * g.out_w..(oy + 1) * g.out_w];
                for ox in ox0..ox1 {
                    orow[ox] += wv * xrow[ox * g.stride + kx - g.padding];
                }
            }
        }
    }
}

/// Adjoint of [`correlate_plane`]: scatters the output gradient back into the
/// input gradient plane and the kernel gradient.
#[inline]
fn correlate_plane_backward(xp: &[f64], kp: &[f64], gout: &[f64], gx: &mut [f64], gk: &mut [f64], g: &ConvGeometry) {
    for ky in 0..g.kh {
        let (oy0, oy1) = tap_range(ky, g.padding, g.stride, g.height, g.out_h);
        for kx in 0..g.kw {
            let wv = kp[ky * g.kw + kx];
            let (ox0, ox1) = tap_range(kx, g.padding, g.stride, g.width, g.out_w);
            let mut wgrad = 0.0;
            for oy in oy0..oy1 {
                let iy = oy * g.stride + ky - g.padding;
                let grow = &gout[oy * g.out_w..(oy + 1) * g.out_w];
                for (ox, &go) in grow.iter().enumerate().take(ox1).skip(ox0) {
                    let ix = iy * g.width + ox * g.stride + kx - g.padding;
                    gx[ix] += wv * go;
                    wgrad += xp[ix] * go;
                }
            }
            gk[ky * g.kw + kx] += wgrad;
        }
    }
}

/// Unfolds `x` into columns `[C·kh·kw, N·Ho·Wo]` so a dense convolution
/// becomes a single matrix product.
fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (in_plane, out_plane) = (g.height * g.width, g.out_h * g.out_w);
    let cols_n = g.batch * out_plane;
    let mut cols = vec![0.0; g.in_channels * g.kh * g.kw * cols_n];
    for c in 0..g.in_channels {
        for ky in 0..g.kh {
            let (oy0, oy1) = tap_range(ky, g.padding, g.stride, g.height, g.out_h);
            for kx in 0..g.kw {
                let (ox0, ox1) = tap_range(kx, g.padding, g.stride, g.width, g.out_w);
                let row = &mut cols[((c * g.kh + ky) * g.kw + kx) * cols_n..][..cols_n];
                for n in 0..g.batch {
                    let xp = &x[(n * g.in_channels + c) * in_plane..][..in_plane];
                    for oy in oy0..oy1 {
                        let xrow = &xp[(oy * g.stride + ky - g.padding) * g.width..][..g.width];
                        let dst = &mut row[n * out_plane + oy * g.out_w..][..g.out_w];
                        for ox in ox0..ox1 {
                            dst[ox] = xrow[ox * g.stride + kx - g.padding];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates column gradients back onto the input.
fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (in_plane, out_plane) = (g.height * g.width, g.out_h * g.out_w);
    let cols_n = g.batch * out_plane;
    let mut gx = vec![0.0; g.batch * g.in_channels * in_plane];
    for c in 0..g.in_channels {
        for ky in 0..g.kh {
            let (oy0, oy1) = tap_range(ky, g.padding, g.stride, g.height, g.out_h);
            for kx in 0..g.kw {
                let (ox0, ox1) = tap_range(kx, g.padding, g.stride, g.width, g.out_w);
                let row = &cols[((c * g.kh + ky) * g.kw + kx) * cols_n..][..cols_n];
                for n in 0..g.batch {
                    let gp = &mut gx[(n * g.in_channels + c) * in_plane..][..in_plane];
                    for oy in oy0..oy1 {
                        let grow = &mut gp[(oy * g.stride + ky - g.padding) * g.width..][..g.width];
                        let src = &row[n * out_plane + oy * g.out_w..][..g.out_w];
                        for ox in ox0..ox1 {
                            grow[ox * g.stride + kx - g.padding] += src[ox];
                        }
                    }
                }
            }
        }
    }
    gx
}

fn dense_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, g: &ConvGeometry) -> Vec<f64> {
    let out_plane = g.out_h * g.out_w;
    let cols_n = g.batch * out_plane;
    let depth = g.in_channels * g.kh * g.kw;
    let cols = im2col(x.data(), g);
    let mut prod = vec![0.0; g.out_channels * cols_n];
    if let Some(b) = b {
        for (row, &bv) in prod.chunks_mut(cols_n).zip(b.data()) {
            row.fill(bv);
        }
    }
    gemm_acc(w.data(), &cols, &mut prod, g.out_channels, depth, cols_n);
    // [O, N·P] → [N, O, P]
    let mut out = vec![0.0; prod.len()];
    for o in 0..g.out_channels {
        for n in 0..g.batch {
            out[(n * g.out_channels + o) * out_plane..][..out_plane].copy_from_slice(&prod[o * cols_n + n * out_plane..][..out_plane]);
        }
    }
    out
}

fn depthwise_forward(x: &Tensor, w: &Tensor, b: Option<&Tensor>, g: &ConvGeometry) -> Vec<f64> {
    let in_plane = g.height * g.width;
    let out_plane = g.out_h * g.out_w;
    let taps = g.kh * g.kw;
    let mut out = vec![0.0; g.batch * g.out_channels * out_plane];
    for n in 0..g.batch {
        for c in 0..g.out_channels {
            let oplane = &mut out[(n * g.out_channels + c) * out_plane..][..out_plane];
            if let Some(b) = b {
                oplane.fill(b.data()[c]);
            }
            let xp = &x.data()[(n * g.in_channels + c) * in_plane..][..in_plane];
            correlate_plane(xp, &w.data()[c * taps..][..taps], oplane, g);
        }
    }
    out
}

fn conv_forward(op: &'static str, x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, padding: usize, depthwise: bool) -> Result<Tensor> {
    let g = geometry(op, x, w, stride, padding, depthwise)?;
    check_bias(op, b, g.out_channels)?;
    let out = if depthwise { depthwise_forward(x, w, b, &g) } else { dense_forward(x, w, b, &g) };
    let taps = g.kh * g.kw;
    let per_out = if depthwise { taps } else { g.in_channels * taps };
    counter::record(g.batch * g.out_channels * g.out_h * g.out_w * per_out);
    Ok(Tensor::from_parts(vec![g.batch, g.out_channels, g.out_h, g.out_w], out))
}

fn dense_backward(x: &Tensor, w: &Tensor, grad: &Tensor, g: &ConvGeometry) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let out_plane = g.out_h * g.out_w;
    let cols_n = g.batch * out_plane;
    let depth = g.in_channels * g.kh * g.kw;
    // [N, O, P] → [O, N·P]
    let mut gout = vec![0.0; g.out_channels * cols_n];
    for o in 0..g.out_channels {
        for n in 0..g.batch {
            gout[o * cols_n + n * out_plane..][..out_plane].copy_from_slice(&grad.data()[(n * g.out_channels + o) * out_plane..][..out_plane]);
        }
    }
    let gb = gout.chunks(cols_n).map(|r| r.iter().sum()).collect();
    let cols = im2col(x.data(), g);
    let mut gw = vec![0.0; g.out_channels * depth];
    gemm_nt(&gout, &cols, &mut gw, g.out_channels, cols_n, depth);
    drop(cols);
    let mut gcols = vec![0.0; depth * cols_n];
    gemm_tn_acc(w.data(), &gout, &mut gcols, g.out_channels, depth, cols_n);
    (col2im(&gcols, g), gw, gb)
}

fn depthwise_backward(x: &Tensor, w: &Tensor, grad: &Tensor, g: &ConvGeometry) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_plane = g.height * g.width;
    let out_plane = g.out_h * g.out_w;
    let taps = g.kh * g.kw;
    let mut gx = vec![0.0; x.numel()];
    let mut gw = vec![0.0; w.numel()];
    let mut gb = vec![0.0; g.out_channels];
    for n in 0..g.batch {
        for c in 0..g.out_channels {
            let gplane = &grad.data()[(n * g.out_channels + c) * out_plane..][..out_plane];
            gb[c] += gplane.iter().sum::<f64>();
            let xoff = (n * g.in_channels + c) * in_plane;
            correlate_plane_backward(
                &x.data()[xoff..xoff + in_plane],
                &w.data()[c * taps..][..taps],
                gplane,
                &mut gx[xoff..xoff + in_plane],
                &mut gw[c * taps..][..taps],
                g,
            );
        }
    }
    (gx, gw, gb)
}

fn conv_backward(x: &Tensor, w: &Tensor, grad: &Tensor, stride: usize, padding: usize, depthwise: bool) -> (Tensor, Tensor, Tensor) {
    let g = geometry("conv2d backward", x, w, stride, padding, depthwise).expect("forward validated geometry");
    let (gx, gw, gb) = if depthwise { depthwise_backward(x, w, grad, &g) } else { dense_backward(x, w, grad, &g) };
    (
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(w.shape().to_vec(), gw),
        Tensor::from_parts(vec![g.out_channels], gb),
    )
}

/// Dense cross-correlation: `x[N,C,H,W] ⋆ w[O,C,kh,kw] (+ b[O])`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    conv_forward("conv2d", x, w, b, stride, padding, false)
}

/// Adjoints of [`conv2d`] for input, weight, and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, grad: &Tensor, stride: usize, padding: usize) -> (Tensor, Tensor, Tensor) {
    conv_backward(x, w, grad, stride, padding, false)
}

/// Channel-wise cross-correlation: `w` has shape `[C,1,kh,kw]`.
pub fn dwconv2d(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, padding: usize) -> Result<Tensor> {
    conv_forward("dwconv2d", x, w, b, stride, padding, true)
}

pub fn dwconv2d_backward(x: &Tensor, w: &Tensor, grad: &Tensor, stride: usize, padding: usize) -> (Tensor, Tensor, Tensor) {
    conv_backward(x, w, grad, stride, padding, true)
}
