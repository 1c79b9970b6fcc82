use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Reorders axes so that output axis `i` is input axis `perm[i]`; copies.
pub fn permute(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape("permute", format!("{perm:?} is not a permutation of rank {rank}")));
    }
    let in_strides = strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(x.numel());
    let mut index = vec![0usize; rank];
    let data = x.data();
    let last = rank - 1;
    let inner = out_shape[last];
    let inner_stride = src_strides[last];
    'outer: loop {
        let base: usize = index.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
        out.extend((0..inner).map(|j| data[base + j * inner_stride]));
        // advance all but the innermost axis
        let mut axis = last;
        loop {
            if axis == 0 {
                break 'outer;
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < out_shape[axis] {
                break;
            }
            index[axis] = 0;
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Swaps two axes.
pub fn transpose(x: &Tensor, a: usize, b: usize) -> Result<Tensor> {
    let mut perm: Vec<usize> = (0..x.rank()).collect();
    if a >= perm.len() || b >= perm.len() {
        return Err(Error::shape("transpose", format!("axes ({a}, {b}) out of range for {:?}", x.shape())));
    }
    perm.swap(a, b);
    permute(x, &perm)
}

/// `(outer, axis_len, inner)` decomposition of a shape around `axis`.
fn around(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (shape[..axis].iter().product(), shape[axis], shape[axis + 1..].iter().product())
}

/// Joins tensors along `axis`; all other extents must agree.
pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
    if axis >= first.rank() {
        return Err(Error::shape("concat", format!("axis {axis} out of range for {:?}", first.shape())));
    }
    for p in &parts[1..] {
        let same = p.rank() == first.rank()
            && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !same {
            return Err(Error::dim("concat", first.shape(), p.shape()));
        }
    }
    let (outer, _, inner) = around(first.shape(), axis);
    let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for p in parts {
            let chunk = p.shape()[axis] * inner;
            out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

/// Joins along the last axis.
pub fn concat_last_axis(parts: &[&Tensor]) -> Result<Tensor> {
    let axis = parts.first().map(|p| p.rank().saturating_sub(1)).unwrap_or(0);
    concat(parts, axis)
}

/// Slice `[start, start + len)` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    if axis >= x.rank() || len == 0 || start + len > x.shape()[axis] {
        return Err(Error::shape(
            "narrow",
            format!("range {start}..{} on axis {axis} of {:?}", start + len, x.shape()),
        ));
    }
    let (outer, n, inner) = around(x.shape(), axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

/// Adjoint of [`narrow`]: embeds the gradient into zeros of the input shape.
pub fn narrow_backward(input_shape: &[usize], axis: usize, start: usize, grad: &Tensor) -> Tensor {
    let (outer, n, inner) = around(input_shape, axis);
    let len = grad.shape()[axis];
    let mut out = vec![0.0; input_shape.iter().product()];
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out[base..base + len * inner].copy_from_slice(&grad.data()[o * len * inner..(o + 1) * len * inner]);
    }
    Tensor::from_parts(input_shape.to_vec(), out)
}
