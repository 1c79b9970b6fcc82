use super::counter;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Splits `[..., m, k]` into `(batch, m, k)`.
fn matrix_dims(shape: &[usize]) -> (usize, usize, usize) {
    let r = shape.len();
    (shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1])
}

fn check_matmul(a: &Tensor, b: &Tensor) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() < 2 || sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] || sa[sa.len() - 1] != sb[sb.len() - 2] {
        return Err(Error::dim("matmul", sa, sb));
    }
    Ok(())
}

/// `out[i, j] += Σ_p lhs[i, p] · rhs[p, j]` for one matrix pair.
#[inline]
pub(super) fn gemm_acc(lhs: &[f64], rhs: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a = lhs[i * k + p];
            let rrow = &rhs[p * n..(p + 1) * n];
            for (o, &r) in row.iter_mut().zip(rrow) {
                *o += a * r;
            }
        }
    }
}

/// `out[i, p] = Σ_j g[i, j] · rhs[p, j]` (product with a transposed right operand).
#[inline]
pub(super) fn gemm_nt(g: &[f64], rhs: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let rrow = &rhs[p * n..(p + 1) * n];
            out[i * k + p] += grow.iter().zip(rrow).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// `out[p, j] += Σ_i lhs[i, p] · g[i, j]` (product with a transposed left operand).
#[inline]
pub(super) fn gemm_tn_acc(lhs: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let a = lhs[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += a * gv;
            }
        }
    }
}

/// Batched matrix product `[..., m, k] × [..., k, n] → [..., m, n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_matmul(a, b)?;
    let (batch, m, k) = matrix_dims(a.shape());
    let n = b.shape()[b.rank() - 1];
    let mut out = vec![0.0; batch * m * n];
    for bi in 0..batch {
        gemm_acc(
            &a.data()[bi * m * k..(bi + 1) * m * k],
            &b.data()[bi * k * n..(bi + 1) * k * n],
            &mut out[bi * m * n..(bi + 1) * m * n],
            m,
            k,
            n,
        );
    }
    counter::record(batch * m * k * n);
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Ok(Tensor::from_parts(shape, out))
}

pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (batch, m, k) = matrix_dims(a.shape());
    let n = b.shape()[b.rank() - 1];
    let mut ga = vec![0.0; a.numel()];
    let mut gb = vec![0.0; b.numel()];
    for bi in 0..batch {
        let g = &grad.data()[bi * m * n..(bi + 1) * m * n];
        gemm_nt(g, &b.data()[bi * k * n..(bi + 1) * k * n], &mut ga[bi * m * k..(bi + 1) * m * k], m, n, k);
        gemm_tn_acc(&a.data()[bi * m * k..(bi + 1) * m * k], g, &mut gb[bi * k * n..(bi + 1) * k * n], m, k, n);
    }
    (
        Tensor::from_parts(a.shape().to_vec(), ga),
        Tensor::from_parts(b.shape().to_vec(), gb),
    )
}

/// Affine map over the last axis: `x[..., Din] · w[Din, Dout] + b[Dout]`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let din = *x.shape().last().ok_or_else(|| Error::dim("linear", x.shape(), w.shape()))?;
    if w.rank() != 2 || w.shape()[0] != din {
        return Err(Error::dim("linear", x.shape(), w.shape()));
    }
    let dout = w.shape()[1];
    if let Some(b) = b {
        if b.shape() != [dout] {
            return Err(Error::dim("linear", w.shape(), b.shape()));
        }
    }
    let rows = x.numel() / din;
    let mut out = match b {
        Some(b) => b.data().repeat(rows),
        None => vec![0.0; rows * dout],
    };
    gemm_acc(x.data(), w.data(), &mut out, rows, din, dout);
    counter::record(rows * din * dout);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = dout;
    Ok(Tensor::from_parts(shape, out))
}

/// Adjoints of [`linear`] for input, weight, and bias.
pub fn linear_backward(x: &Tensor, w: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    let rows = x.numel() / din;
    let mut gx = vec![0.0; x.numel()];
    gemm_nt(grad.data(), w.data(), &mut gx, rows, dout, din);
    let mut gw = vec![0.0; w.numel()];
    gemm_tn_acc(x.data(), grad.data(), &mut gw, rows, din, dout);
    let mut gb = vec![0.0; dout];
    for row in grad.data().chunks_exact(dout) {
        for (acc, &g) in gb.iter_mut().zip(row) {
            *acc += g;
        }
    }
    (
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(w.shape().to_vec(), gw),
        Tensor::from_parts(vec![dout], gb),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        Tensor::from_fn(&[m, n], |idx| {
            let (i, j) = (idx / n, idx % n);
            (0..k).map(|p| a.at(&[i, p]) * b.at(&[p, j])).sum()
        })
    }

    #[test]
    fn identity_cases() {
        let a = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &Tensor::eye(2)).unwrap(), a);
        let a3 = Tensor::from_fn(&[3, 3], |i| i as f64 - 4.0);
        assert_eq!(matmul(&Tensor::eye(3), &a3).unwrap(), a3);
    }

    #[test]
    fn rejects_inner_mismatch() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[4, 2])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
        assert!(matmul(&Tensor::zeros(&[2, 2, 3]), &Tensor::zeros(&[3, 3, 2])).is_err());
    }

    #[test]
    fn batched_matches_per_slice() {
        let a = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn(&[2, 4, 5], |i| (i as f64 * 0.11).cos());
        let c = matmul(&a, &b).unwrap();
        for bi in 0..2 {
            let sa = Tensor::new(vec![3, 4], a.data()[bi * 12..(bi + 1) * 12].to_vec()).unwrap();
            let sb = Tensor::new(vec![4, 5], b.data()[bi * 20..(bi + 1) * 20].to_vec()).unwrap();
            let expect = naive(&sa, &sb);
            assert!(expect.data().iter().zip(&c.data()[bi * 15..(bi + 1) * 15]).all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn linear_zero_weight_gives_bias() {
        let x = Tensor::from_fn(&[3, 4], |i| i as f64);
        let b = Tensor::new(vec![2], vec![0.5, -1.5]).unwrap();
        let y = linear(&x, &Tensor::zeros(&[4, 2]), Some(&b)).unwrap();
        assert!(y.data().chunks(2).all(|r| r == [0.5, -1.5]));
        let id = linear(&x, &Tensor::eye(4), None).unwrap();
        assert_eq!(id, x);
        assert!(linear(&x, &Tensor::zeros(&[3, 2]), None).is_err());
    }
}
